//! Flat key=value configuration with flag overrides. Precedence is
//! flag > file > default; the file comes from `--config` or the
//! `DYNAFLOW_CONFIG` environment variable.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use clap::Args;
use dynaflow::error::{Error, Result};
use dynaflow::rankpool::SolverConfig;
use dynaflow::tvl1::Tvl1Params;
use dynaflow::WindowSpec;

/// Resolved run configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub window_size: usize,
    pub stride: usize,
    pub clip_bound: f32,
    pub svm_c: f64,
    pub solver_tolerance: f64,
    pub solver_epochs: usize,
    pub solver_seed: u64,
    pub workers: usize,
    pub tvl1_tau: f32,
    pub tvl1_lambda: f32,
    pub tvl1_theta: f32,
    pub tvl1_pyramid_levels: usize,
    pub tvl1_pyramid_scale: f32,
    pub tvl1_warps: usize,
    pub tvl1_inner_iterations: usize,
    pub tvl1_convergence_eps: f32,
}

impl Default for Config {
    fn default() -> Self {
        let tvl1 = Tvl1Params::default();
        let solver = SolverConfig::default();
        Config {
            window_size: 25,
            stride: 5,
            clip_bound: 20.0,
            svm_c: 1.0,
            solver_tolerance: solver.tolerance,
            solver_epochs: solver.max_epochs,
            solver_seed: solver.seed,
            workers: 0,
            tvl1_tau: tvl1.tau,
            tvl1_lambda: tvl1.lambda,
            tvl1_theta: tvl1.theta,
            tvl1_pyramid_levels: tvl1.pyramid_levels,
            tvl1_pyramid_scale: tvl1.pyramid_scale,
            tvl1_warps: tvl1.warps_per_level,
            tvl1_inner_iterations: tvl1.inner_iterations,
            tvl1_convergence_eps: tvl1.convergence_eps,
        }
    }
}

/// Flag overrides shared by every subcommand; any key given here wins over
/// the config file and the built-in default.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Config file of `key = value` lines (default: $DYNAFLOW_CONFIG if set)
    #[arg(long, global = true)]
    pub config: Option<String>,

    /// Window length in flow frames [default: 25]
    #[arg(long = "window_size", visible_alias = "window")]
    pub window_size: Option<usize>,

    /// Temporal stride between window starts [default: 5]
    #[arg(long)]
    pub stride: Option<usize>,

    /// Flow clipping bound in pixels [default: 20]
    #[arg(long = "clip_bound")]
    pub clip_bound: Option<f32>,

    /// Ranking-SVM regularization weight C [default: 1.0]
    #[arg(long = "svm_c")]
    pub svm_c: Option<f64>,

    /// Relative objective-change tolerance of the pooling solver [default: 1e-10]
    #[arg(long = "solver_tolerance")]
    pub solver_tolerance: Option<f64>,

    /// Epoch budget of the pooling solver [default: 2000]
    #[arg(long = "solver_epochs")]
    pub solver_epochs: Option<usize>,

    /// Seed for the solver's shuffled update order [default: 0]
    #[arg(long = "solver_seed")]
    pub solver_seed: Option<u64>,

    /// Worker threads; 0 uses available parallelism, 1 forces serial runs [default: 0]
    #[arg(long)]
    pub workers: Option<usize>,

    /// TV-L1 dual time step [default: 0.25]
    #[arg(long = "tvl1_tau")]
    pub tvl1_tau: Option<f32>,

    /// TV-L1 data-attachment weight [default: 0.15]
    #[arg(long = "tvl1_lambda")]
    pub tvl1_lambda: Option<f32>,

    /// TV-L1 coupling weight [default: 0.3]
    #[arg(long = "tvl1_theta")]
    pub tvl1_theta: Option<f32>,

    /// TV-L1 pyramid levels [default: 5]
    #[arg(long = "tvl1_pyramid_levels")]
    pub tvl1_pyramid_levels: Option<usize>,

    /// TV-L1 pyramid downscale ratio [default: 0.5]
    #[arg(long = "tvl1_pyramid_scale")]
    pub tvl1_pyramid_scale: Option<f32>,

    /// TV-L1 warps per pyramid level [default: 5]
    #[arg(long = "tvl1_warps")]
    pub tvl1_warps: Option<usize>,

    /// TV-L1 inner iterations per warp [default: 300]
    #[arg(long = "tvl1_inner_iterations")]
    pub tvl1_inner_iterations: Option<usize>,

    /// TV-L1 early-exit threshold on the mean squared update [default: 0.01]
    #[arg(long = "tvl1_convergence_eps")]
    pub tvl1_convergence_eps: Option<f32>,
}

fn parse_key<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for key {key}")))
}

fn parse_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{}:{}: expected `key = value`, got {raw:?}",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

impl Config {
    /// Applies the precedence chain flag > file > default and re-validates
    /// every module-level invariant.
    pub fn resolve(args: &ConfigArgs) -> Result<Config> {
        let mut cfg = Config::default();

        let file = match &args.config {
            Some(path) => Some(path.clone()),
            None => std::env::var("DYNAFLOW_CONFIG").ok().filter(|s| !s.is_empty()),
        };
        if let Some(path) = file {
            let map = parse_file(Path::new(&path))?;
            for (key, value) in &map {
                match key.as_str() {
                    "window_size" => cfg.window_size = parse_key(key, value)?,
                    "stride" => cfg.stride = parse_key(key, value)?,
                    "clip_bound" => cfg.clip_bound = parse_key(key, value)?,
                    "svm_c" => cfg.svm_c = parse_key(key, value)?,
                    "solver_tolerance" => cfg.solver_tolerance = parse_key(key, value)?,
                    "solver_epochs" => cfg.solver_epochs = parse_key(key, value)?,
                    "solver_seed" => cfg.solver_seed = parse_key(key, value)?,
                    "workers" => cfg.workers = parse_key(key, value)?,
                    "tvl1_tau" => cfg.tvl1_tau = parse_key(key, value)?,
                    "tvl1_lambda" => cfg.tvl1_lambda = parse_key(key, value)?,
                    "tvl1_theta" => cfg.tvl1_theta = parse_key(key, value)?,
                    "tvl1_pyramid_levels" => cfg.tvl1_pyramid_levels = parse_key(key, value)?,
                    "tvl1_pyramid_scale" => cfg.tvl1_pyramid_scale = parse_key(key, value)?,
                    "tvl1_warps" => cfg.tvl1_warps = parse_key(key, value)?,
                    "tvl1_inner_iterations" => cfg.tvl1_inner_iterations = parse_key(key, value)?,
                    "tvl1_convergence_eps" => cfg.tvl1_convergence_eps = parse_key(key, value)?,
                    other => {
                        return Err(Error::Config(format!("unknown config key {other:?}")));
                    }
                }
            }
        }

        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = args.$field {
                    cfg.$field = v;
                }
            };
        }
        take!(window_size);
        take!(stride);
        take!(clip_bound);
        take!(svm_c);
        take!(solver_tolerance);
        take!(solver_epochs);
        take!(solver_seed);
        take!(workers);
        take!(tvl1_tau);
        take!(tvl1_lambda);
        take!(tvl1_theta);
        take!(tvl1_pyramid_levels);
        take!(tvl1_pyramid_scale);
        take!(tvl1_warps);
        take!(tvl1_inner_iterations);
        take!(tvl1_convergence_eps);

        cfg.window_spec()?;
        cfg.tvl1_params().validate()?;
        cfg.solver_config().validate()?;
        if cfg.clip_bound <= 0.0 || cfg.clip_bound.is_nan() {
            return Err(Error::Config(format!(
                "clip_bound must be positive, got {}",
                cfg.clip_bound
            )));
        }
        if cfg.svm_c <= 0.0 || cfg.svm_c.is_nan() {
            return Err(Error::Config(format!(
                "svm_c must be positive, got {}",
                cfg.svm_c
            )));
        }
        Ok(cfg)
    }

    pub fn window_spec(&self) -> Result<WindowSpec> {
        WindowSpec::new(self.window_size, self.stride)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            max_epochs: self.solver_epochs,
            tolerance: self.solver_tolerance,
            seed: self.solver_seed,
        }
    }

    pub fn tvl1_params(&self) -> Tvl1Params {
        Tvl1Params {
            tau: self.tvl1_tau,
            lambda: self.tvl1_lambda,
            theta: self.tvl1_theta,
            pyramid_levels: self.tvl1_pyramid_levels,
            pyramid_scale: self.tvl1_pyramid_scale,
            warps_per_level: self.tvl1_warps,
            inner_iterations: self.tvl1_inner_iterations,
            convergence_eps: self.tvl1_convergence_eps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_flags() -> ConfigArgs {
        ConfigArgs {
            config: None,
            window_size: None,
            stride: None,
            clip_bound: None,
            svm_c: None,
            solver_tolerance: None,
            solver_epochs: None,
            solver_seed: None,
            workers: None,
            tvl1_tau: None,
            tvl1_lambda: None,
            tvl1_theta: None,
            tvl1_pyramid_levels: None,
            tvl1_pyramid_scale: None,
            tvl1_warps: None,
            tvl1_inner_iterations: None,
            tvl1_convergence_eps: None,
        }
    }

    #[test]
    fn defaults_match_module_defaults() {
        let cfg = Config::default();
        assert_eq!(cfg.window_size, 25);
        assert_eq!(cfg.stride, 5);
        assert_eq!(cfg.clip_bound, 20.0);
        assert_eq!(cfg.svm_c, 1.0);
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dynaflow.conf");
        std::fs::write(&path, "window_size = 15\nstride=3\n# comment\n").unwrap();
        let mut args = no_flags();
        args.config = Some(path.to_str().unwrap().to_string());
        args.stride = Some(7);
        let cfg = Config::resolve(&args).unwrap();
        assert_eq!(cfg.window_size, 15); // file
        assert_eq!(cfg.stride, 7); // flag
        assert_eq!(cfg.clip_bound, 20.0); // default
    }

    #[test]
    fn unknown_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        std::fs::write(&path, "window = 15\n").unwrap();
        let mut args = no_flags();
        args.config = Some(path.to_str().unwrap().to_string());
        assert_eq!(Config::resolve(&args).unwrap_err().kind(), "configuration");
    }

    #[test]
    fn invalid_values_are_rejected_at_load() {
        let mut args = no_flags();
        args.clip_bound = Some(-1.0);
        assert_eq!(Config::resolve(&args).unwrap_err().kind(), "configuration");

        let mut args = no_flags();
        args.tvl1_pyramid_scale = Some(1.5);
        assert_eq!(Config::resolve(&args).unwrap_err().kind(), "configuration");
    }
}
