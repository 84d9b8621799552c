//! Run configuration: an optional TOML file overlaid by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use perfunc_core::fitting::FitOptions;
use perfunc_core::ingest::Schema;
use perfunc_core::model::CostModel;
use serde::{Deserialize, Serialize};

/// Price of one translated example used when neither the file nor the flags set one.
pub const DEFAULT_C_T: f64 = 0.007;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    #[default]
    Amue,
    Gpr,
    Both,
}

impl ModelChoice {
    pub fn amue(self) -> bool {
        matches!(self, ModelChoice::Amue | ModelChoice::Both)
    }

    pub fn gpr(self) -> bool {
        matches!(self, ModelChoice::Gpr | ModelChoice::Both)
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelChoice::Amue => "amue",
            ModelChoice::Gpr => "gpr",
            ModelChoice::Both => "both",
        })
    }
}

/// Comma-separated list of performance levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Levels(pub Vec<f64>);

impl FromStr for Levels {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|part| part.trim().parse::<f64>().map_err(|_| format!("`{part}` is not a number")))
            .collect::<Result<_, _>>()
            .map(Levels)
    }
}

/// Flags shared by every subcommand. Anything given here wins over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Observation file (CSV or TSV).
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Fit report from `perfunc fit`, used instead of refitting AMUE.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    /// TOML file mapping field names to the input's column names.
    #[arg(long, value_name = "FILE")]
    pub schema: Option<PathBuf>,
    /// Price of one translated example.
    #[arg(long)]
    pub ct: Option<f64>,
    /// Price of one manual example.
    #[arg(long, conflicts_with = "cost_ratio")]
    pub cm: Option<f64>,
    /// c_t / c_m.
    #[arg(long)]
    pub cost_ratio: Option<f64>,
    /// Largest realizable number of translated examples (defaults to the pivot size).
    #[arg(long)]
    pub pmax: Option<f64>,
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    /// Seed for multi-start fitting and the train/test split.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of optimizer starts.
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Performance levels, e.g. `55,60,65`.
    #[arg(long)]
    pub levels: Option<Levels>,
    /// Share of each set used for training in `evaluate`.
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostSection {
    c_t: Option<f64>,
    c_m: Option<f64>,
    cost_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    input: Option<PathBuf>,
    params: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    model: Option<ModelChoice>,
    levels: Option<Vec<f64>>,
    p_max: Option<f64>,
    train_fraction: Option<f64>,
    #[serde(default)]
    cost: CostSection,
    fit: Option<FitOptions>,
    schema: Option<Schema>,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub schema: Schema,
    cost: Result<CostModel, String>,
    pub levels: Option<Vec<f64>>,
    pub p_max: Option<f64>,
    pub fit: FitOptions,
    pub out_dir: PathBuf,
    pub model: ModelChoice,
    pub train_fraction: f64,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn resolve_cost(c_t: Option<f64>, c_m: Option<f64>, ratio: Option<f64>) -> Result<CostModel, String> {
    let c_t = c_t.unwrap_or(DEFAULT_C_T);
    let cost = match (c_m, ratio) {
        (Some(c_m), None) => CostModel::new(c_t, c_m),
        (None, Some(r)) => CostModel::from_ratio(c_t, r),
        (Some(_), Some(_)) => return Err("give either c_m or cost_ratio, not both".into()),
        (None, None) => return Err("a manual-example price is needed: set --cm or --cost-ratio".into()),
    };
    cost.map_err(|e| e.to_string())
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let (file, base) = match &args.config {
            Some(path) => {
                let file: FileConfig = read_toml(path)?;
                (file, path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (FileConfig::default(), PathBuf::new()),
        };
        // Paths in the config file are relative to the file itself.
        let rebase = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });

        let schema = match &args.schema {
            Some(path) => read_toml(path)?,
            None => file.schema.unwrap_or_default(),
        };
        // A flag for c_m replaces a ratio from the file and vice versa.
        let (c_m, ratio) = if args.cm.is_some() || args.cost_ratio.is_some() {
            (args.cm, args.cost_ratio)
        } else {
            (file.cost.c_m, file.cost.cost_ratio)
        };
        let cost = resolve_cost(args.ct.or(file.cost.c_t), c_m, ratio);

        let mut fit = file.fit.unwrap_or_default();
        if let Some(seed) = args.seed {
            fit.rng_seed = seed;
        }
        if let Some(restarts) = args.restarts {
            fit.restarts = restarts;
        }
        fit.validate()?;

        let levels = args.levels.clone().map(|l| l.0).or(file.levels);
        if let Some(levels) = &levels {
            if levels.is_empty() {
                bail!("the level list is empty");
            }
            if let Some(w) = levels.windows(2).find(|w| !(w[1] > w[0])) {
                bail!("levels must be strictly increasing ({} then {})", w[0], w[1]);
            }
        }
        let p_max = args.pmax.or(file.p_max);
        if let Some(p) = p_max {
            if !(p.is_finite() && p > 0.0) {
                bail!("p_max must be a positive number, got {p}");
            }
        }
        let train_fraction = args.train_fraction.or(file.train_fraction).unwrap_or(DEFAULT_TRAIN_FRACTION);
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            bail!("train fraction must lie strictly between 0 and 1, got {train_fraction}");
        }

        Ok(Self {
            input: args.input.clone().or(rebase(file.input)),
            params: args.params.clone().or(rebase(file.params)),
            schema,
            cost,
            levels,
            p_max,
            fit,
            out_dir: args.out_dir.clone().or(rebase(file.out_dir)).unwrap_or_else(|| PathBuf::from(".")),
            model: args.model.or(file.model).unwrap_or_default(),
            train_fraction,
        })
    }

    /// The cost model, or why none could be formed. Only commands that price
    /// data ask for it.
    pub fn cost(&self) -> Result<CostModel> {
        self.cost.clone().map_err(anyhow::Error::msg)
    }

    pub fn cost_if_given(&self) -> Option<CostModel> {
        self.cost.clone().ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = std::env::temp_dir().join(format!("perfunc-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        std::fs::write(
            &path,
            "input = \"data.csv\"\nmodel = \"gpr\"\nlevels = [50.0, 60.0]\n[cost]\nc_t = 0.01\ncost_ratio = 0.1\n[fit]\nrestarts = 3\n",
        )
        .unwrap();
        let args = CommonArgs {
            config: Some(path),
            cm: Some(0.5),
            seed: Some(9),
            ..CommonArgs::default()
        };
        let cfg = RunConfig::resolve(&args).unwrap();
        assert_eq!(cfg.input.unwrap(), dir.join("data.csv"));
        assert_eq!(cfg.model, ModelChoice::Gpr);
        assert_eq!(cfg.levels.unwrap(), vec![50.0, 60.0]);
        let cost = cfg.cost.unwrap();
        assert_eq!((cost.c_t(), cost.c_m()), (0.01, 0.5));
        assert_eq!((cfg.fit.restarts, cfg.fit.rng_seed), (3, 9));
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn cost_needs_exactly_one_manual_price() {
        assert!(resolve_cost(None, None, None).is_err());
        assert!(resolve_cost(None, Some(0.07), Some(0.1)).is_err());
        let c = resolve_cost(None, None, Some(0.1)).unwrap();
        assert!((c.c_m() - 0.07).abs() < 1e-15);
    }

    #[test]
    fn levels_parse_and_validate() {
        assert_eq!("55, 60,65".parse::<Levels>().unwrap().0, vec![55.0, 60.0, 65.0]);
        assert!("55,x".parse::<Levels>().is_err());
        let args = CommonArgs {
            levels: Some(Levels(vec![60.0, 55.0])),
            ..CommonArgs::default()
        };
        assert!(RunConfig::resolve(&args).is_err());
    }
}
