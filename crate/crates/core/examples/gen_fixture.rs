//! Regenerates the bundled `data/` snapshots.
//!
//! The bundled CSVs are synthetic cumulative case series in the exact
//! JHU `time_series_covid19_confirmed_global.csv` layout, produced
//! deterministically by this program: one log-domain logistic growth
//! curve per country, seeded noise and a weekly reporting wobble on the
//! daily log-increments, fixed province shares for the countries the
//! real file splits into rows, and Sweden pinned to its published
//! reported totals for early/mid May 2020. Three snapshots are written,
//! truncated at May 4, May 12 and May 20, 2020.
//!
//! Usage: cargo run -p wincast-core --example gen_fixture [out_dir]

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use wincast_core::rng::{mix_seed, NormalSource};

const FIRST_DATE: (i32, u32, u32) = (2020, 1, 22);
const TOTAL_DAYS: usize = 120; // Jan 22 .. May 20, 2020
const MAY4: usize = 103;
const MAY12: usize = 111;
const MAY20: usize = 119;

const BASE_SEED: u64 = 20200122;

struct Country {
    name: &'static str,
    /// Day index of the first reported case.
    first_day: usize,
    /// Count on the first day.
    y0: f64,
    /// Cumulative total pinned at May 4.
    may4_total: f64,
    /// Decay constant of the daily log-growth rate, days: growth falls
    /// by e every `decay` days from the first case on.
    decay: f64,
    /// (province, share, lat, long); empty province = country row.
    rows: &'static [(&'static str, f64, f64, f64)],
}

const COUNTRIES: &[Country] = &[
    Country {
        name: "Sweden",
        first_day: 9,
        y0: 1.0,
        may4_total: 22_721.0,
        decay: 35.0,
        rows: &[("", 1.0, 60.128, 18.6435)],
    },
    Country {
        name: "Denmark",
        first_day: 36,
        y0: 1.0,
        may4_total: 9_938.0,
        decay: 15.0,
        rows: &[
            ("", 0.979, 56.2639, 9.5018),
            ("Faroe Islands", 0.019, 61.8926, -6.9118),
            ("Greenland", 0.002, 71.7069, -42.6043),
        ],
    },
    Country {
        name: "Finland",
        first_day: 7,
        y0: 1.0,
        may4_total: 5_327.0,
        decay: 30.0,
        rows: &[("", 1.0, 61.9241, 25.7482)],
    },
    Country {
        name: "Norway",
        first_day: 35,
        y0: 1.0,
        may4_total: 7_904.0,
        decay: 14.0,
        rows: &[("", 1.0, 60.472, 8.4689)],
    },
    Country {
        name: "France",
        first_day: 2,
        y0: 2.0,
        may4_total: 168_925.0,
        decay: 22.0,
        rows: &[
            ("", 0.9755, 46.2276, 2.2137),
            ("French Guiana", 0.006, 3.9339, -53.1258),
            ("Guadeloupe", 0.006, 16.265, -61.551),
            ("Martinique", 0.0065, 14.6415, -61.0242),
            ("Mayotte", 0.004, -12.8275, 45.1662),
            ("Reunion", 0.002, -21.1151, 55.5364),
        ],
    },
    Country {
        name: "Italy",
        first_day: 9,
        y0: 2.0,
        may4_total: 211_938.0,
        decay: 21.0,
        rows: &[("", 1.0, 41.8719, 12.5674)],
    },
    Country {
        name: "Spain",
        first_day: 11,
        y0: 1.0,
        may4_total: 218_011.0,
        decay: 19.0,
        rows: &[("", 1.0, 40.4637, -3.7492)],
    },
    Country {
        name: "United Kingdom",
        first_day: 9,
        y0: 2.0,
        may4_total: 190_584.0,
        decay: 33.0,
        rows: &[
            ("", 0.9925, 55.3781, -3.436),
            ("Bermuda", 0.0031, 32.3078, -64.7505),
            ("Cayman Islands", 0.0019, 19.3133, -81.2546),
            ("Gibraltar", 0.0009, 36.1408, -5.3536),
            ("Isle of Man", 0.0016, 54.2361, -4.5481),
        ],
    },
    Country {
        name: "China",
        first_day: 0,
        y0: 548.0,
        may4_total: 83_959.0,
        decay: 9.0,
        rows: &[
            ("Hubei", 0.812, 30.9756, 112.2707),
            ("Guangdong", 0.0223, 23.3417, 113.4244),
            ("Henan", 0.0152, 33.882, 113.614),
            ("Zhejiang", 0.0152, 29.1832, 120.0934),
            ("Hunan", 0.0122, 27.6104, 111.7088),
            ("Anhui", 0.0118, 31.8257, 117.2264),
            ("Jiangxi", 0.0111, 27.614, 115.7221),
            ("Shandong", 0.0092, 36.3427, 118.1498),
            ("Beijing", 0.0071, 40.1824, 116.4142),
            ("Shanghai", 0.008, 31.202, 121.4491),
            ("Hong Kong", 0.0124, 22.3, 114.2),
        ],
    },
    Country {
        name: "India",
        first_day: 8,
        y0: 1.0,
        may4_total: 42_836.0,
        decay: 55.0,
        rows: &[("", 1.0, 20.5937, 78.9629)],
    },
    Country {
        name: "Iran",
        first_day: 28,
        y0: 2.0,
        may4_total: 98_647.0,
        decay: 18.0,
        rows: &[("", 1.0, 32.4279, 53.688)],
    },
    Country {
        name: "US",
        first_day: 0,
        y0: 1.0,
        may4_total: 1_180_375.0,
        decay: 34.0,
        rows: &[("", 1.0, 40.0, -100.0)],
    },
    Country {
        name: "Korea, South",
        first_day: 0,
        y0: 1.0,
        may4_total: 10_801.0,
        decay: 20.0,
        rows: &[("", 1.0, 35.9078, 127.7669)],
    },
    Country {
        name: "Germany",
        first_day: 5,
        y0: 1.0,
        may4_total: 165_664.0,
        decay: 19.0,
        rows: &[("", 1.0, 51.1657, 10.4515)],
    },
    Country {
        name: "Australia",
        first_day: 4,
        y0: 4.0,
        may4_total: 6_847.0,
        decay: 12.0,
        rows: &[
            ("New South Wales", 0.55, -33.8688, 151.2093),
            ("Victoria", 0.45, -37.8136, 144.9631),
        ],
    },
];

/// Sweden's published cumulative totals, pinned exactly:
/// May 5, 7, 11 (reported after the May-4 snapshot) and
/// May 13, 15, 19 (reported after the May-12 snapshot).
const SWEDEN_ANCHORS: &[(usize, f64)] = &[
    (MAY4, 22_721.0),
    (104, 23_216.0),
    (106, 24_623.0),
    (110, 26_670.0),
    (112, 27_909.0),
    (114, 29_207.0),
    (118, 30_799.0),
    (MAY20, 31_211.0),
];

/// Noise-free log-count curve for one country: log-growth decays
/// exponentially from the first case, scaled to hit the May-4 total.
fn clean_log_curve(c: &Country) -> Vec<f64> {
    let v0 = c.y0.ln();
    let delta = c.may4_total.ln() - v0;
    let shape = |t: f64| 1.0 - (-(t - c.first_day as f64) / c.decay).exp();
    let s_anchor = shape(MAY4 as f64);
    (c.first_day..TOTAL_DAYS)
        .map(|t| v0 + delta * shape(t as f64) / s_anchor)
        .collect()
}

/// Apply seeded noise and a weekly wobble to the daily log-increments,
/// then re-pin the May-4 value.
fn noisy_log_curve(c: &Country, index: usize) -> Vec<f64> {
    let clean = clean_log_curve(c);
    let mut src = NormalSource::from_seed(mix_seed(BASE_SEED, &[index as u64]));
    let phase = index as f64 * 1.7;

    let mut values = Vec::with_capacity(clean.len());
    values.push(clean[0]);
    for (t, pair) in clean.windows(2).enumerate() {
        let day = (c.first_day + t + 1) as f64;
        let weekly = 0.22 * (std::f64::consts::TAU * (day + phase) / 7.0).sin();
        let factor = (1.0 + 0.18 * src.next_normal() + weekly).max(0.0);
        let increment = (pair[1] - pair[0]) * factor;
        values.push(values[t] + increment);
    }

    let anchor_at = MAY4 - c.first_day;
    let shift = c.may4_total.ln() - values[anchor_at];
    for v in &mut values {
        *v += shift;
    }
    values
}

/// Cumulative counts for one country across the full date range.
fn country_counts(c: &Country, index: usize) -> Vec<u64> {
    let log_curve = noisy_log_curve(c, index);
    let mut counts = vec![0u64; TOTAL_DAYS];
    for (t, v) in log_curve.iter().enumerate() {
        counts[c.first_day + t] = (v.exp() + 0.5).floor().max(1.0) as u64;
    }

    if c.name == "Sweden" {
        // Exact published totals with geometric interpolation between.
        for pair in SWEDEN_ANCHORS.windows(2) {
            let (d0, y0) = pair[0];
            let (d1, y1) = pair[1];
            let ratio = (y1 / y0).powf(1.0 / (d1 - d0) as f64);
            for (offset, slot) in counts[d0..=d1].iter_mut().enumerate() {
                *slot = (y0 * ratio.powi(offset as i32) + 0.5).floor() as u64;
            }
        }
    }
    counts
}

fn main() -> std::io::Result<()> {
    let out_dir = std::env::args().nth(1).unwrap_or_else(|| "data".into());
    let out_dir = Path::new(&out_dir);
    std::fs::create_dir_all(out_dir)?;

    // One row of cumulative counts per (country, province) pair.
    let mut rows: Vec<(String, String, f64, f64, Vec<u64>)> = Vec::new();
    for (index, c) in COUNTRIES.iter().enumerate() {
        let totals = country_counts(c, index);
        let share_sum: f64 = c.rows.iter().map(|r| r.1).sum();
        for &(province, share, lat, long) in c.rows {
            let series: Vec<u64> = totals
                .iter()
                .map(|&y| ((y as f64) * share / share_sum + 0.5).floor() as u64)
                .collect();
            rows.push((province.to_string(), c.name.to_string(), lat, long, series));
        }
    }

    // One reporting correction: Victoria dips ~2% for a day mid-April.
    for row in &mut rows {
        if row.0 == "Victoria" {
            let prev = row.4[84];
            row.4[85] = ((prev as f64) * 0.98) as u64;
        }
    }

    for (label, last_day) in [("2020-05-04", MAY4), ("2020-05-12", MAY12), ("2020-05-20", MAY20)] {
        let path = out_dir.join(format!(
            "time_series_covid19_confirmed_global_{label}.csv"
        ));
        write_snapshot(&path, &rows, last_day + 1)?;
        println!("wrote {}", path.display());
    }

    let alias_path = out_dir.join("country_aliases.toml");
    let mut f = BufWriter::new(File::create(&alias_path)?);
    writeln!(f, "# Colloquial country names -> Country/Region column values.")?;
    writeln!(f)?;
    writeln!(f, "[aliases]")?;
    writeln!(f, "USA = \"US\"")?;
    writeln!(f, "\"United States\" = \"US\"")?;
    writeln!(f, "UK = \"United Kingdom\"")?;
    writeln!(f, "\"South Korea\" = \"Korea, South\"")?;
    println!("wrote {}", alias_path.display());

    // Eyeball line: totals at the May-4 column.
    for c in COUNTRIES {
        let total: u64 = rows
            .iter()
            .filter(|r| r.1 == c.name)
            .map(|r| r.4[MAY4])
            .sum();
        println!("{:>16}: {total} on 2020-05-04", c.name);
    }
    Ok(())
}

fn write_snapshot(
    path: &Path,
    rows: &[(String, String, f64, f64, Vec<u64>)],
    n_days: usize,
) -> std::io::Result<()> {
    let start = chrono::NaiveDate::from_ymd_opt(FIRST_DATE.0, FIRST_DATE.1, FIRST_DATE.2).unwrap();
    let mut f = BufWriter::new(File::create(path)?);
    write!(f, "Province/State,Country/Region,Lat,Long")?;
    for i in 0..n_days {
        let d = start + chrono::Days::new(i as u64);
        write!(f, ",{}", d.format("%-m/%-d/%y"))?;
    }
    writeln!(f)?;
    for (province, country, lat, long, counts) in rows {
        let country_field = if country.contains(',') {
            format!("\"{country}\"")
        } else {
            country.clone()
        };
        write!(f, "{province},{country_field},{lat},{long}")?;
        for &c in &counts[..n_days] {
            write!(f, ",{c}")?;
        }
        writeln!(f)?;
    }
    Ok(())
}
