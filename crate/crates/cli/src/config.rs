//! Run configuration: built-in defaults, overlaid by an optional TOML
//! file, overlaid by command-line flags. Flags win over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use wincast_core::ingest::CountryAliases;
use wincast_core::tuning::SearchGrid;

pub const DEFAULT_SNAPSHOT: &str = "time_series_covid19_confirmed_global_2020-05-04.csv";
pub const DATA_DIR_ENV: &str = "WINCAST_DATA_DIR";

/// The twelve countries evaluated by default, colloquial names.
pub const DEFAULT_COUNTRIES: [&str; 12] = [
    "Sweden", "Denmark", "Finland", "Norway", "France", "Italy", "Spain", "UK", "China", "India",
    "Iran", "USA",
];

/// Fully resolved configuration for one invocation. Serialized form is
/// hashed into every output file header so results can be replayed.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub countries: Vec<String>,
    pub taus: Vec<usize>,
    pub methods: Vec<String>,
    pub mode: String,
    pub days: usize,
    pub trials: usize,
    pub seed: u64,
    /// Excluded from the config hash: it cannot change any result.
    #[serde(skip)]
    pub out: PathBuf,
    pub max_train_days: Option<usize>,
    pub grid: GridConfig,
    pub aliases: CountryAliases,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub w: Vec<usize>,
    pub h: Vec<usize>,
    pub lambda: Vec<f64>,
    pub folds: usize,
    pub val_horizon: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = SearchGrid::default();
        Self {
            w: g.w_values,
            h: g.h_values,
            lambda: g.lambda_values,
            folds: g.n_folds,
            val_horizon: g.val_horizon,
        }
    }
}

impl GridConfig {
    pub fn to_grid(&self) -> SearchGrid {
        SearchGrid {
            w_values: self.w.clone(),
            h_values: self.h.clone(),
            lambda_values: self.lambda.clone(),
            val_horizon: self.val_horizon,
            n_folds: self.folds,
        }
    }
}

/// What a config file may contain; every field optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    data: Option<PathBuf>,
    aliases: Option<PathBuf>,
    countries: Option<Vec<String>>,
    taus: Option<Vec<usize>>,
    methods: Option<Vec<String>>,
    mode: Option<String>,
    days: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    max_train_days: Option<usize>,
    grid: Option<GridFileConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFileConfig {
    w: Option<Vec<usize>>,
    h: Option<Vec<usize>>,
    lambda: Option<Vec<f64>>,
    folds: Option<usize>,
    val_horizon: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct AliasFile {
    aliases: BTreeMap<String, String>,
}

/// Command-line overrides, filled in by clap in `main`.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub countries: Vec<String>,
    pub taus: Vec<usize>,
    pub methods: Vec<String>,
    pub mode: Option<String>,
    pub days: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub max_train_days: Option<usize>,
}

pub fn resolve(config_path: Option<&Path>, over: &Overrides) -> Result<RunConfig> {
    let file: FileConfig = match config_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => FileConfig::default(),
    };

    let data = over
        .data
        .clone()
        .or(file.data)
        .or_else(|| {
            std::env::var_os(DATA_DIR_ENV).map(|dir| PathBuf::from(dir).join(DEFAULT_SNAPSHOT))
        })
        .unwrap_or_else(|| PathBuf::from("data").join(DEFAULT_SNAPSHOT));

    let countries = if !over.countries.is_empty() {
        over.countries.clone()
    } else {
        file.countries
            .unwrap_or_else(|| DEFAULT_COUNTRIES.iter().map(|s| s.to_string()).collect())
    };
    let taus = if !over.taus.is_empty() {
        over.taus.clone()
    } else {
        file.taus.unwrap_or_else(|| vec![1, 3, 7])
    };
    if taus.is_empty() || taus.contains(&0) {
        bail!("taus must be non-empty and each at least 1");
    }
    let methods = if !over.methods.is_empty() {
        over.methods.clone()
    } else {
        file.methods.unwrap_or_else(|| vec!["elm-tv".to_string()])
    };
    let mode = over
        .mode
        .clone()
        .or(file.mode)
        .unwrap_or_else(|| "fixed".to_string());
    if mode != "fixed" && mode != "daily" {
        bail!("mode must be 'fixed' or 'daily', got {mode:?}");
    }
    let trials = over.trials.or(file.trials).unwrap_or(100);
    if trials == 0 {
        bail!("trials must be at least 1");
    }

    let mut grid = GridConfig::default();
    if let Some(g) = file.grid {
        if let Some(w) = g.w {
            grid.w = w;
        }
        if let Some(h) = g.h {
            grid.h = h;
        }
        if let Some(lambda) = g.lambda {
            grid.lambda = lambda;
        }
        if let Some(folds) = g.folds {
            grid.folds = folds;
        }
        if g.val_horizon.is_some() {
            grid.val_horizon = g.val_horizon;
        }
    }

    // Aliases: explicit file, else country_aliases.toml next to the
    // data file, else the built-in table.
    let mut aliases = CountryAliases::builtin();
    let alias_path = file.aliases.or_else(|| {
        data.parent()
            .map(|d| d.join("country_aliases.toml"))
            .filter(|p| p.exists())
    });
    if let Some(path) = alias_path {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading aliases {}", path.display()))?;
        let parsed: AliasFile =
            toml::from_str(&text).with_context(|| format!("parsing aliases {}", path.display()))?;
        for (from, to) in parsed.aliases {
            aliases.insert(&from, &to);
        }
    }

    Ok(RunConfig {
        data,
        countries,
        taus,
        methods,
        mode,
        days: over.days.or(file.days).unwrap_or(31),
        trials,
        seed: over.seed.or(file.seed).unwrap_or(2020),
        out: over
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("out")),
        max_train_days: over.max_train_days.or(file.max_train_days),
        grid,
        aliases,
    })
}

/// FNV-1a over the canonical JSON form; stable across runs and builds.
pub fn config_hash(config: &RunConfig) -> u64 {
    let json = serde_json::to_string(config).expect("config serializes");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in json.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
