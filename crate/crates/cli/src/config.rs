//! Flat `key = value` experiment configuration.
//!
//! Lines are `dotted.key = value`; `#` starts a comment. The canonical echo
//! written into the manifest round-trips losslessly through `parse`.

use dynlap::dynamics::MapKind;
use dynlap::laplacian::Convention;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Pipeline {
    /// discretise -> Ulam -> assemble -> eigensolve -> sweep -> checks
    Full,
    /// analytic shear fixture: line masses of the static optimal cut
    Fixture21,
    /// mollified-operator convergence study
    Mollify,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DensityKind {
    Uniform,
    SinusoidX1,
    SinusoidX2Torus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Cheeger,
    Coarea,
    FedererFleming,
    Mollify,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    pub x1_range: (f64, f64),
    pub x2_range: (f64, f64),
    pub k: usize,
    pub l: usize,
    pub periodic_x1: bool,
    pub periodic_x2: bool,
    pub density: DensityKind,
    pub density_samples: usize,
    /// Composition steps of the single map, applied left to right.
    pub map: Vec<MapKind>,
    /// Multi-step sequence; when nonempty the averaged operator over the
    /// cumulative compositions is solved instead of the single-map one.
    pub map_steps: Vec<Vec<MapKind>>,
    pub q: usize,
    pub eigen_k: usize,
    pub eigen_tol: f64,
    pub eigen_max_steps: Option<usize>,
    pub seed: u64,
    pub condense_threshold: f64,
    pub convention: Convention,
    pub sweep_thresholds: usize,
    pub checks: Vec<Check>,
    pub mollify_epsilons: Vec<f64>,
    /// Reference second eigenvalue for the convention-resolution record
    /// (absolute value comparison), when a published number exists.
    pub reference_lambda2: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            pipeline: Pipeline::Full,
            x1_range: (0.0, 1.0),
            x2_range: (0.0, 1.0),
            k: 16,
            l: 16,
            periodic_x1: false,
            periodic_x2: false,
            density: DensityKind::Uniform,
            density_samples: 10,
            map: vec![MapKind::Identity],
            map_steps: Vec::new(),
            q: 100,
            eigen_k: 7,
            eigen_tol: 1e-8,
            eigen_max_steps: None,
            seed: 7,
            condense_threshold: 0.5,
            convention: Convention::WithHalf,
            sweep_thresholds: 200,
            checks: vec![Check::Cheeger],
            mollify_epsilons: vec![0.2, 0.1],
            reference_lambda2: None,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn parse_map_kind(word: &str) -> Result<MapKind, ConfigError> {
    let w = word.trim();
    if let Some(rest) = w.strip_prefix("affine(") {
        let inner = rest
            .strip_suffix(')')
            .ok_or_else(|| ConfigError(format!("unterminated affine spec `{w}`")))?;
        let nums: Vec<f64> = inner
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ConfigError(format!("bad affine coefficient in `{w}`: {e}")))?;
        if nums.len() != 6 {
            return Err(ConfigError(format!(
                "affine map takes 6 coefficients a11,a12,a21,a22,b1,b2, got {}",
                nums.len()
            )));
        }
        return Ok(MapKind::Affine {
            linear: [[nums[0], nums[1]], [nums[2], nums[3]]],
            offset: [nums[4], nums[5]],
        });
    }
    match w {
        "identity" => Ok(MapKind::Identity),
        "shear_t1" => Ok(MapKind::ShearT1),
        "shear_t2" => Ok(MapKind::ShearT2),
        "distort_t3" => Ok(MapKind::DistortT3),
        "standard_t4" => Ok(MapKind::StandardT4),
        other => Err(ConfigError(format!("unknown map kind `{other}`"))),
    }
}

fn map_kind_name(kind: &MapKind) -> String {
    match kind {
        MapKind::Identity => "identity".into(),
        MapKind::ShearT1 => "shear_t1".into(),
        MapKind::ShearT2 => "shear_t2".into(),
        MapKind::DistortT3 => "distort_t3".into(),
        MapKind::StandardT4 => "standard_t4".into(),
        MapKind::Affine { linear, offset } => format!(
            "affine({},{},{},{},{},{})",
            linear[0][0], linear[0][1], linear[1][0], linear[1][1], offset[0], offset[1]
        ),
    }
}

fn parse_map_chain(text: &str) -> Result<Vec<MapKind>, ConfigError> {
    text.split('+').map(parse_map_kind).collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                )));
            };
            kv.insert(key.trim().to_string(), value.trim().to_string());
        }
        let mut cfg = ExperimentConfig::default();
        let mut get = |key: &str| kv.remove(key);
        if let Some(v) = get("pipeline") {
            cfg.pipeline = match v.as_str() {
                "full" => Pipeline::Full,
                "fixture_2_1" => Pipeline::Fixture21,
                "mollify" => Pipeline::Mollify,
                other => return Err(ConfigError(format!("unknown pipeline `{other}`"))),
            };
        }
        macro_rules! num {
            ($key:literal, $field:expr) => {
                if let Some(v) = get($key) {
                    $field = v
                        .parse()
                        .map_err(|e| ConfigError(format!("{}: {e}", $key)))?;
                }
            };
        }
        num!("grid.x1_min", cfg.x1_range.0);
        num!("grid.x1_max", cfg.x1_range.1);
        num!("grid.x2_min", cfg.x2_range.0);
        num!("grid.x2_max", cfg.x2_range.1);
        num!("grid.k", cfg.k);
        num!("grid.l", cfg.l);
        num!("grid.periodic_x1", cfg.periodic_x1);
        num!("grid.periodic_x2", cfg.periodic_x2);
        num!("density.samples_per_axis", cfg.density_samples);
        num!("transfer.q", cfg.q);
        num!("eigen.k", cfg.eigen_k);
        num!("eigen.tol", cfg.eigen_tol);
        num!("eigen.seed", cfg.seed);
        num!("eigen.condense_threshold", cfg.condense_threshold);
        num!("sweep.thresholds", cfg.sweep_thresholds);
        if let Some(v) = get("eigen.max_steps") {
            if !v.is_empty() {
                cfg.eigen_max_steps = Some(
                    v.parse()
                        .map_err(|e| ConfigError(format!("eigen.max_steps: {e}")))?,
                );
            }
        }
        if let Some(v) = get("convention.reference_lambda2") {
            if !v.is_empty() {
                cfg.reference_lambda2 = Some(
                    v.parse()
                        .map_err(|e| ConfigError(format!("convention.reference_lambda2: {e}")))?,
                );
            }
        }
        if let Some(v) = get("density.kind") {
            cfg.density = match v.as_str() {
                "uniform" => DensityKind::Uniform,
                "sinusoid_x1" => DensityKind::SinusoidX1,
                "sinusoid_x2_torus" => DensityKind::SinusoidX2Torus,
                other => return Err(ConfigError(format!("unknown density kind `{other}`"))),
            };
        }
        if let Some(v) = get("map.kind") {
            cfg.map = parse_map_chain(&v)?;
        }
        if let Some(v) = get("map.steps") {
            if !v.is_empty() {
                cfg.map_steps = v
                    .split(',')
                    .map(parse_map_chain)
                    .collect::<Result<_, _>>()?;
            }
        }
        if let Some(v) = get("convention") {
            cfg.convention = match v.as_str() {
                "with_half" => Convention::WithHalf,
                "raw" => Convention::Raw,
                other => return Err(ConfigError(format!("unknown convention `{other}`"))),
            };
        }
        if let Some(v) = get("checks") {
            cfg.checks = v
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| match s.trim() {
                    "cheeger" => Ok(Check::Cheeger),
                    "coarea" => Ok(Check::Coarea),
                    "federer_fleming" => Ok(Check::FedererFleming),
                    "mollify" => Ok(Check::Mollify),
                    other => Err(ConfigError(format!("unknown check `{other}`"))),
                })
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = get("mollify.epsilons") {
            cfg.mollify_epsilons = v
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| ConfigError(format!("mollify.epsilons: {e}")))?;
        }
        if let Some(stray) = kv.keys().next() {
            return Err(ConfigError(format!("unknown key `{stray}`")));
        }
        Ok(cfg)
    }

    /// Canonical text form; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let pipeline = match self.pipeline {
            Pipeline::Full => "full",
            Pipeline::Fixture21 => "fixture_2_1",
            Pipeline::Mollify => "mollify",
        };
        let density = match self.density {
            DensityKind::Uniform => "uniform",
            DensityKind::SinusoidX1 => "sinusoid_x1",
            DensityKind::SinusoidX2Torus => "sinusoid_x2_torus",
        };
        let map = self
            .map
            .iter()
            .map(map_kind_name)
            .collect::<Vec<_>>()
            .join("+");
        let steps = self
            .map_steps
            .iter()
            .map(|chain| {
                chain
                    .iter()
                    .map(map_kind_name)
                    .collect::<Vec<_>>()
                    .join("+")
            })
            .collect::<Vec<_>>()
            .join(",");
        let checks = self
            .checks
            .iter()
            .map(|c| match c {
                Check::Cheeger => "cheeger",
                Check::Coarea => "coarea",
                Check::FedererFleming => "federer_fleming",
                Check::Mollify => "mollify",
            })
            .collect::<Vec<_>>()
            .join(",");
        let eps = self
            .mollify_epsilons
            .iter()
            .map(|e| format!("{e}"))
            .collect::<Vec<_>>()
            .join(",");
        use std::fmt::Write;
        let _ = writeln!(out, "pipeline = {pipeline}");
        let _ = writeln!(out, "grid.x1_min = {}", self.x1_range.0);
        let _ = writeln!(out, "grid.x1_max = {}", self.x1_range.1);
        let _ = writeln!(out, "grid.x2_min = {}", self.x2_range.0);
        let _ = writeln!(out, "grid.x2_max = {}", self.x2_range.1);
        let _ = writeln!(out, "grid.k = {}", self.k);
        let _ = writeln!(out, "grid.l = {}", self.l);
        let _ = writeln!(out, "grid.periodic_x1 = {}", self.periodic_x1);
        let _ = writeln!(out, "grid.periodic_x2 = {}", self.periodic_x2);
        let _ = writeln!(out, "density.kind = {density}");
        let _ = writeln!(out, "density.samples_per_axis = {}", self.density_samples);
        let _ = writeln!(out, "map.kind = {map}");
        let _ = writeln!(out, "map.steps = {steps}");
        let _ = writeln!(out, "transfer.q = {}", self.q);
        let _ = writeln!(out, "eigen.k = {}", self.eigen_k);
        let _ = writeln!(out, "eigen.tol = {}", self.eigen_tol);
        let _ = writeln!(
            out,
            "eigen.max_steps = {}",
            self.eigen_max_steps
                .map(|v| v.to_string())
                .unwrap_or_default()
        );
        let _ = writeln!(out, "eigen.seed = {}", self.seed);
        let _ = writeln!(
            out,
            "eigen.condense_threshold = {}",
            self.condense_threshold
        );
        let _ = writeln!(
            out,
            "convention = {}",
            match self.convention {
                Convention::WithHalf => "with_half",
                Convention::Raw => "raw",
            }
        );
        let _ = writeln!(
            out,
            "convention.reference_lambda2 = {}",
            self.reference_lambda2
                .map(|v| v.to_string())
                .unwrap_or_default()
        );
        let _ = writeln!(out, "sweep.thresholds = {}", self.sweep_thresholds);
        let _ = writeln!(out, "checks = {checks}");
        let _ = writeln!(out, "mollify.epsilons = {eps}");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_text();
        let back = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn composition_and_steps_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.map = vec![MapKind::DistortT3, MapKind::StandardT4];
        cfg.map_steps = vec![
            vec![MapKind::ShearT1],
            vec![MapKind::ShearT1, MapKind::ShearT2],
        ];
        cfg.reference_lambda2 = Some(-0.6046);
        cfg.eigen_max_steps = Some(1500);
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# a comment\n\ngrid.k = 32 # trailing\ngrid.l = 8\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.k, 32);
        assert_eq!(cfg.l, 8);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse("grid.kk = 3\n").is_err());
        assert!(ExperimentConfig::parse("map.kind = warp\n").is_err());
    }

    #[test]
    fn affine_map_parses() {
        let cfg = ExperimentConfig::parse("map.kind = affine(1,0,0,1,0.25,0)\n").unwrap();
        assert_eq!(
            cfg.map,
            vec![MapKind::Affine {
                linear: [[1.0, 0.0], [0.0, 1.0]],
                offset: [0.25, 0.0]
            }]
        );
    }
}
