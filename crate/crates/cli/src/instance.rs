//! Instance-file schema and conversion into core types.
//!
//! Instances are UTF-8 JSON with a declared `schema_version`; unknown fields
//! are rejected.  Complex numbers are `[re, im]` pairs; exact rationals are
//! `"p/q"` strings (a λ entry may be a string, a float, or a two-element
//! array whose parts are strings or floats).  Puncture indices in transform
//! scripts are 1-based, matching the `t_1..t_n` labelling.

use serde::Deserialize;

use iml_core::exact::{parse_rational, Scalar};
use iml_core::matrix::{c, CMat, C64};
use iml_core::parabolic::{ExponentData, FuchsianSystem, ParabolicConnection, Weights};
use iml_core::schlesinger::DeformationPath;
use iml_core::{Error, MarkedSphere};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub rank: usize,
    pub punctures: Vec<[f64; 2]>,
    #[serde(default)]
    pub include_infinity: bool,
    pub basepoint: [f64; 2],
    /// n × r × r complex entries.
    pub residues: Vec<Vec<Vec<[f64; 2]>>>,
    #[serde(default)]
    pub lambda: Option<Vec<Vec<ScalarSpec>>>,
    #[serde(default)]
    pub weights: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub deformation_path: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default)]
    pub transform_script: Option<Vec<TransformStep>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScalarSpec {
    Rational(String),
    Float(f64),
    Complex([ComplexPart; 2]),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ComplexPart {
    Rational(String),
    Float(f64),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Global comparison tolerance.
    pub base: f64,
    /// Relative step tolerance of the transport integrator.
    pub transport: f64,
    /// Relative step tolerance of the Schlesinger integrator.
    pub flow: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { base: iml_core::DEFAULT_TOL, transport: 1e-12, flow: 1e-11 }
    }
}

/// One directive of a transform script.  `point` is 1-based.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformStep {
    Elm { point: usize, level: usize },
    Twist { point: usize, direction: i8 },
    Permute { point: usize },
    Normalize,
}

impl InstanceFile {
    pub fn from_str(text: &str) -> Result<Self, Error> {
        let inst: InstanceFile = serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("instance parse error: {e}")))?;
        if inst.schema_version != 1 {
            return Err(Error::Validation(format!(
                "unsupported schema_version {} (expected 1)",
                inst.schema_version
            )));
        }
        Ok(inst)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    pub fn sphere(&self) -> Result<MarkedSphere, Error> {
        let punctures: Vec<C64> = self.punctures.iter().map(|p| c(p[0], p[1])).collect();
        MarkedSphere::new(punctures, c(self.basepoint[0], self.basepoint[1]), self.include_infinity)
    }

    pub fn system(&self) -> Result<FuchsianSystem, Error> {
        let sphere = self.sphere()?;
        if self.residues.len() != self.punctures.len() {
            return Err(Error::Validation(format!(
                "{} residues for {} punctures",
                self.residues.len(),
                self.punctures.len()
            )));
        }
        let r = self.rank;
        let mut residues = Vec::with_capacity(self.residues.len());
        for (i, rows) in self.residues.iter().enumerate() {
            if rows.len() != r || rows.iter().any(|row| row.len() != r) {
                return Err(Error::Validation(format!("residue {i} is not {r}x{r}")));
            }
            residues.push(CMat::from_fn(r, r, |a, b| c(rows[a][b][0], rows[a][b][1])));
        }
        FuchsianSystem::new(sphere, residues)
    }

    fn scalar_from_spec(spec: &ScalarSpec) -> Result<Scalar, Error> {
        Ok(match spec {
            ScalarSpec::Rational(s) => Scalar::from_rational(parse_rational(s)?),
            ScalarSpec::Float(x) => Scalar::from_f64(*x),
            ScalarSpec::Complex(parts) => {
                let exact = parts.iter().all(|p| matches!(p, ComplexPart::Rational(_)));
                if exact {
                    let re = match &parts[0] {
                        ComplexPart::Rational(s) => parse_rational(s)?,
                        ComplexPart::Float(_) => unreachable!(),
                    };
                    let im = match &parts[1] {
                        ComplexPart::Rational(s) => parse_rational(s)?,
                        ComplexPart::Float(_) => unreachable!(),
                    };
                    Scalar::Exact(iml_core::GaussRational::new(re, im))
                } else {
                    let part = |p: &ComplexPart| -> Result<f64, Error> {
                        Ok(match p {
                            ComplexPart::Float(x) => *x,
                            ComplexPart::Rational(s) => {
                                use num_traits::ToPrimitive;
                                parse_rational(s)?.to_f64().ok_or_else(|| {
                                    Error::Validation("rational out of f64 range".into())
                                })?
                            }
                        })
                    };
                    Scalar::from_complex(c(part(&parts[0])?, part(&parts[1])?))
                }
            }
        })
    }

    /// λ table; when absent, falls back to the residue spectra
    /// (lexicographically sorted per point, float mode).
    pub fn exponents(&self, system: &FuchsianSystem) -> Result<ExponentData, Error> {
        match &self.lambda {
            Some(rows) => {
                if rows.len() != self.punctures.len() || rows.iter().any(|r| r.len() != self.rank)
                {
                    return Err(Error::Validation("lambda table must be n x r".into()));
                }
                let mut scalars = Vec::with_capacity(rows.len());
                for row in rows {
                    scalars.push(
                        row.iter()
                            .map(Self::scalar_from_spec)
                            .collect::<Result<Vec<_>, _>>()?,
                    );
                }
                ExponentData::new(scalars)
            }
            None => {
                let mut rows = Vec::with_capacity(system.num_punctures());
                for a in system.residues() {
                    let mut ev = iml_core::matrix::eigenvalues(a)?;
                    iml_core::matrix::sort_lex(&mut ev);
                    rows.push(ev);
                }
                ExponentData::from_complex_rows(&rows)
            }
        }
    }

    pub fn connection(&self) -> Result<ParabolicConnection, Error> {
        let system = self.system()?;
        let exponents = self.exponents(&system)?;
        ParabolicConnection::from_system(system, exponents)
    }

    pub fn weights(&self) -> Result<Option<Weights>, Error> {
        match &self.weights {
            None => Ok(None),
            Some(rows) => {
                let mut alpha = Vec::with_capacity(rows.len());
                for row in rows {
                    alpha.push(
                        row.iter()
                            .map(|s| parse_rational(s))
                            .collect::<Result<Vec<_>, _>>()?,
                    );
                }
                Ok(Some(Weights::new(alpha)?))
            }
        }
    }

    pub fn path(&self) -> Result<Option<DeformationPath>, Error> {
        match &self.deformation_path {
            None => Ok(None),
            Some(configs) => {
                let converted: Vec<Vec<C64>> = configs
                    .iter()
                    .map(|cfg| cfg.iter().map(|p| c(p[0], p[1])).collect())
                    .collect();
                Ok(Some(DeformationPath::new(converted)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "rank": 1,
        "punctures": [[0.0, 0.0], [1.0, 0.0]],
        "basepoint": [0.5, 1.5],
        "residues": [[[[0.5, 0.0]]], [[[-0.5, 0.0]]]],
        "lambda": [["1/2"], ["-1/2"]]
    }"#;

    #[test]
    fn parses_minimal_instance() {
        let inst = InstanceFile::from_str(MINIMAL).unwrap();
        let conn = inst.connection().unwrap();
        assert_eq!(conn.rank(), 1);
        assert!(conn.exponents().is_exact());
        assert_eq!(conn.exponents().degree(), 0);
    }

    #[test]
    fn rejects_unknown_fields() {
        let bad = MINIMAL.replace("\"schema_version\"", "\"surprise\": 1, \"schema_version\"");
        assert!(InstanceFile::from_str(&bad).is_err());
    }

    #[test]
    fn rejects_wrong_schema_version() {
        let bad = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(InstanceFile::from_str(&bad).is_err());
    }

    #[test]
    fn rejects_malformed_residue_shape() {
        let bad = MINIMAL.replace(
            "\"residues\": [[[[0.5, 0.0]]], [[[-0.5, 0.0]]]]",
            "\"residues\": [[[[0.5, 0.0], [0.1, 0.0]]], [[[-0.5, 0.0]]]]",
        );
        let inst = InstanceFile::from_str(&bad).unwrap();
        assert!(inst.system().is_err());
    }

    #[test]
    fn complex_exact_lambda_entries() {
        let text = MINIMAL.replace(
            r#""lambda": [["1/2"], ["-1/2"]]"#,
            r#""lambda": [[["1/2", "0"]], [["-1/2", "0"]]]"#,
        );
        let inst = InstanceFile::from_str(&text).unwrap();
        let conn = inst.connection().unwrap();
        assert!(conn.exponents().is_exact());
    }
}
