//! Scenario files: JSON with `//` line comments, every field defaulted.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::critical::ContinuationConfig;
use crate::error::{Error, Result};
use crate::geometry::Builtin;
use crate::linalg::CVec;
use crate::pencil::Pencil;
use crate::rng::substream;

/// Which pencil to use. Covectors are homogeneous, `H(z) = h[0] + sum_j h[j] z_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PencilSpec {
    /// `[z_N : 1]`.
    Axis,
    /// `[z_1 : z_2]`, base locus through the origin.
    OriginBase,
    /// Gaussian covectors drawn from `seed`.
    Random { seed: u64 },
    /// Explicit covectors as `[re, im]` pairs, `N + 1` entries each.
    Explicit {
        h0: Vec<[f64; 2]>,
        h1: Vec<[f64; 2]>,
    },
}

impl PencilSpec {
    pub fn build(&self, n: usize) -> Result<Pencil> {
        match self {
            PencilSpec::Axis => Ok(Pencil::axis(n)),
            PencilSpec::OriginBase => Ok(Pencil::origin_base(n)),
            PencilSpec::Random { seed } => random_pencil(n, *seed),
            PencilSpec::Explicit { h0, h1 } => {
                let conv = |h: &[[f64; 2]]| -> Result<CVec> {
                    if h.len() != n + 1 {
                        return Err(Error::ConfigInvalid(format!(
                            "pencil covectors need N + 1 = {} entries, got {}",
                            n + 1,
                            h.len()
                        )));
                    }
                    Ok(CVec::from_iterator(
                        n + 1,
                        h.iter().map(|c| Complex64::new(c[0], c[1])),
                    ))
                };
                Pencil::new(conv(h0)?, conv(h1)?).map_err(|e| Error::ConfigInvalid(e.to_string()))
            }
        }
    }
}

/// Pencil with independent standard complex Gaussian covectors.
pub fn random_pencil(n: usize, seed: u64) -> Result<Pencil> {
    let mut rng = substream(seed, "pencil", 0);
    let mut draw = || {
        CVec::from_fn(n + 1, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
    };
    let h0 = draw();
    let h1 = draw();
    Pencil::new(h0, h1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub positivity: f64,
    pub transversality: f64,
    pub preimage: f64,
    pub slice_positivity: f64,
    pub pca_dimension: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            positivity: 1e-6,
            transversality: 1e-6,
            preimage: 1e-6,
            slice_positivity: 1e-3,
            pca_dimension: 0.1,
        }
    }
}

impl Tolerances {
    pub fn scaled(&self, s: f64) -> Self {
        Tolerances {
            positivity: self.positivity * s,
            transversality: self.transversality * s,
            preimage: self.preimage * s,
            slice_positivity: self.slice_positivity * s,
            pca_dimension: self.pca_dimension * s,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [
            ("positivity", self.positivity),
            ("transversality", self.transversality),
            ("preimage", self.preimage),
            ("slice_positivity", self.slice_positivity),
            ("pca_dimension", self.pca_dimension),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::ConfigInvalid(format!(
                    "tolerance {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub certify_samples: usize,
    pub dual_samples: usize,
    pub seed_tries: usize,
    pub base_samples: usize,
    pub probe_budget: usize,
    pub grid_lat: usize,
    pub grid_lon: usize,
    pub preimage_values: usize,
    pub preimage_starts: usize,
    pub morse_samples: usize,
    pub fiber_values: usize,
    pub fiber_points: usize,
    pub shrink_steps: usize,
    pub gauss_samples: usize,
    pub gauss_fibers: usize,
    pub gauss_fiber_points: usize,
    pub submersion_samples: usize,
    pub case_ii_fibers: usize,
    pub slice_samples: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            certify_samples: 1000,
            dual_samples: 1000,
            seed_tries: 64,
            base_samples: 64,
            probe_budget: 200,
            grid_lat: 90,
            grid_lon: 180,
            preimage_values: 8,
            preimage_starts: 48,
            morse_samples: 20,
            fiber_values: 4,
            fiber_points: 200,
            shrink_steps: 5,
            gauss_samples: 1000,
            gauss_fibers: 20,
            gauss_fiber_points: 120,
            submersion_samples: 1000,
            case_ii_fibers: 10,
            slice_samples: 200,
        }
    }
}

impl Budgets {
    fn validate(&self) -> Result<()> {
        let all = [
            ("certify_samples", self.certify_samples),
            ("dual_samples", self.dual_samples),
            ("seed_tries", self.seed_tries),
            ("base_samples", self.base_samples),
            ("probe_budget", self.probe_budget),
            ("grid_lat", self.grid_lat),
            ("grid_lon", self.grid_lon),
            ("preimage_values", self.preimage_values),
            ("preimage_starts", self.preimage_starts),
            ("morse_samples", self.morse_samples),
            ("fiber_values", self.fiber_values),
            ("fiber_points", self.fiber_points),
            ("shrink_steps", self.shrink_steps),
            ("gauss_samples", self.gauss_samples),
            ("gauss_fibers", self.gauss_fibers),
            ("gauss_fiber_points", self.gauss_fiber_points),
            ("submersion_samples", self.submersion_samples),
            ("case_ii_fibers", self.case_ii_fibers),
            ("slice_samples", self.slice_samples),
        ];
        for (name, v) in all {
            if v == 0 {
                return Err(Error::ConfigInvalid(format!(
                    "budget {name} must be positive"
                )));
            }
        }
        if self.grid_lat < 4 || self.grid_lon < 8 {
            return Err(Error::ConfigInvalid(
                "image grid needs at least 4 x 8 cells".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub hypersurface: Builtin,
    pub pencil: PencilSpec,
    pub tolerances: Tolerances,
    pub budgets: Budgets,
    pub continuation: ContinuationConfig,
    pub seed: u64,
    pub output_dir: String,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            hypersurface: Builtin::sphere(2),
            pencil: PencilSpec::Axis,
            tolerances: Tolerances::default(),
            budgets: Budgets::default(),
            continuation: ContinuationConfig::default(),
            seed: 0,
            output_dir: "out".into(),
        }
    }
}

impl ScenarioConfig {
    /// Parses and validates a scenario file.
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(&strip_comments(text))
            .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.hypersurface.validate()?;
        self.tolerances.validate()?;
        self.budgets.validate()?;
        let c = &self.continuation;
        if !(c.h_min > 0.0 && c.h_min <= c.h_init && c.h_init <= c.h_max && c.h_max.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "continuation steps need 0 < h_min <= h_init <= h_max, got {} / {} / {}",
                c.h_min, c.h_init, c.h_max
            )));
        }
        if c.max_steps == 0 || !(c.rank_threshold > 0.0) {
            return Err(Error::ConfigInvalid(
                "continuation budget and rank threshold must be positive".into(),
            ));
        }
        self.pencil.build(self.complex_dim())?;
        Ok(())
    }

    pub fn complex_dim(&self) -> usize {
        use crate::geometry::DefiningFunction;
        self.hypersurface.complex_dim()
    }

    pub fn pencil(&self) -> Result<Pencil> {
        self.pencil.build(self.complex_dim())
    }

    /// The default scenario as a commented file.
    pub fn defaults_document() -> String {
        let json = serde_json::to_string_pretty(&ScenarioConfig::default()).expect("serializable");
        let mut out = String::from(
            "// Scenario file: JSON with `//` line comments. Omitted fields take the values below.\n",
        );
        for line in json.lines() {
            let trimmed = line.trim_start();
            let key = trimmed.strip_prefix('"').and_then(|r| r.split('"').next());
            if let Some(doc) = key.and_then(field_doc) {
                let indent = &line[..line.len() - trimmed.len()];
                out.push_str(&format!("{indent}// {doc}\n"));
            }
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

fn field_doc(key: &str) -> Option<&'static str> {
    Some(match key {
        "hypersurface" => "builtin: sphere {n, radius} | ellipsoid {axes} | perturbed_sphere {n, epsilon, m} | saddle_model {n} | quartic_model {n}",
        "kind" => "builtin name",
        "n" => "complex dimension N",
        "radius" => "sphere radius",
        "pencil" => "preset: axis | origin-base | random {seed} | explicit {h0, h1} with [re, im] entries",
        "tolerances" => "thresholds; --tol-scale multiplies all of them",
        "positivity" => "minimum shape-operator eigenvalue on D",
        "transversality" => "minimum transversality and submersion margin",
        "preimage" => "maximum distance from a preimage of K to the critical circle",
        "slice_positivity" => "minimum shape-operator eigenvalue of fiber slices (base locus on M)",
        "pca_dimension" => "allowed deviation of local PCA dimension of Gauss fibers from 1",
        "budgets" => "sample and solve counts, all positive",
        "certify_samples" => "points for the convexity certificate",
        "dual_samples" => "points for the dual immersion sweep and dual cloud",
        "seed_tries" => "starts for critical-circle seeds",
        "base_samples" => "starts for locating the base locus on M",
        "probe_budget" => "fiber solves per region of the image-curve complement",
        "grid_lat" => "latitude cells of the Riemann-sphere grid",
        "grid_lon" => "longitude cells of the Riemann-sphere grid",
        "preimage_values" => "values of K whose preimages are checked",
        "preimage_starts" => "solves per checked value",
        "morse_samples" => "critical-circle samples for the Morse index",
        "fiber_values" => "regular values whose fibers are sampled",
        "fiber_points" => "points per fiber cloud",
        "shrink_steps" => "values approaching K in the shrinking probe",
        "gauss_samples" => "points for the Gauss-map submersion margin",
        "gauss_fibers" => "Gauss-map fibers probed",
        "gauss_fiber_points" => "points per Gauss fiber",
        "submersion_samples" => "points for the full-differential margin (base locus on M)",
        "case_ii_fibers" => "fibers certified when the base locus meets M",
        "slice_samples" => "points per fiber-slice convexity certificate",
        "continuation" => "critical-circle continuation",
        "h_min" => "smallest step before giving up",
        "h_max" => "largest step",
        "h_init" => "first step",
        "max_steps" => "step budget",
        "rank_threshold" => "relative singular-value threshold for a rank drop",
        "seed" => "master seed for every random stage",
        "output_dir" => "directory for report.json and CSV exports",
        _ => return None,
    })
}

/// Removes `//` comments outside string literals.
pub fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut in_string = false;
        let mut escaped = false;
        let mut cut = line.len();
        let bytes = line.as_bytes();
        for (i, &b) in bytes.iter().enumerate() {
            if in_string {
                if escaped {
                    escaped = false;
                } else if b == b'\\' {
                    escaped = true;
                } else if b == b'"' {
                    in_string = false;
                }
            } else if b == b'"' {
                in_string = true;
            } else if b == b'/' && bytes.get(i + 1) == Some(&b'/') {
                cut = i;
                break;
            }
        }
        out.push_str(&line[..cut]);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_document_parses_back_to_defaults() {
        let doc = ScenarioConfig::defaults_document();
        assert!(doc.contains("// master seed"));
        assert_eq!(
            ScenarioConfig::from_str(&doc).unwrap(),
            ScenarioConfig::default()
        );
    }

    #[test]
    fn comments_inside_strings_survive() {
        let text = "{\"output_dir\": \"a//b\" // trailing\n}";
        assert_eq!(ScenarioConfig::from_str(text).unwrap().output_dir, "a//b");
    }

    #[test]
    fn negative_budget_is_invalid() {
        let e = ScenarioConfig::from_str(r#"{"budgets": {"fiber_points": -5}}"#).unwrap_err();
        assert!(matches!(e, Error::ConfigInvalid(_)));
        let e = ScenarioConfig::from_str(r#"{"budgets": {"fiber_points": 0}}"#).unwrap_err();
        assert!(matches!(e, Error::ConfigInvalid(_)));
    }

    #[test]
    fn perturbation_above_bound_is_invalid() {
        let text =
            r#"{"hypersurface": {"kind": "perturbed_sphere", "n": 2, "epsilon": 0.9, "m": 2}}"#;
        assert!(matches!(
            ScenarioConfig::from_str(text),
            Err(Error::ConfigInvalid(_))
        ));
        let text =
            r#"{"hypersurface": {"kind": "perturbed_sphere", "n": 2, "epsilon": 0.05, "m": 2}}"#;
        assert!(ScenarioConfig::from_str(text).is_ok());
    }

    #[test]
    fn unknown_fields_and_bad_pencils_are_rejected() {
        assert!(ScenarioConfig::from_str(r#"{"sed": 3}"#).is_err());
        let text = r#"{"pencil": {"preset": "explicit", "h0": [[1,0],[0,0],[0,0]], "h1": [[2,0],[0,0],[0,0]]}}"#;
        assert!(matches!(
            ScenarioConfig::from_str(text),
            Err(Error::ConfigInvalid(_))
        ));
        let text =
            r#"{"pencil": {"preset": "origin-base"}, "hypersurface": {"kind": "sphere", "n": 3}}"#;
        assert_eq!(
            ScenarioConfig::from_str(text).unwrap().pencil,
            PencilSpec::OriginBase
        );
    }

    #[test]
    fn random_pencils_are_seeded() {
        let a = random_pencil(2, 5).unwrap();
        let b = random_pencil(2, 5).unwrap();
        let c = random_pencil(2, 6).unwrap();
        assert_eq!(a.h0(), b.h0());
        assert_ne!(a.h0(), c.h0());
    }
}
