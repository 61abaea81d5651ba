//! Experiment configuration: one self-describing TOML file plus flag
//! overrides (flags win). All randomness flows from the single master seed.

use serde::{Deserialize, Serialize};

use nurn_core::{MarginalFn, RateKernel};

/// Expression palette shared by kernels, initial profiles, and test
/// functions: constant, affine a + b·x, sinusoid a + b·sin(2πx).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "expr", rename_all = "lowercase")]
pub enum ExprSpec {
    Constant {
        value: f64,
    },
    Affine {
        a: f64,
        b: f64,
    },
    #[serde(alias = "sin")]
    Sinusoid {
        a: f64,
        b: f64,
    },
}

impl ExprSpec {
    pub fn marginal(&self) -> MarginalFn {
        match *self {
            ExprSpec::Constant { value } => MarginalFn::Constant(value),
            ExprSpec::Affine { a, b } => MarginalFn::Affine { a, b },
            ExprSpec::Sinusoid { a, b } => MarginalFn::Sinusoid { a, b },
        }
    }

    pub fn sample(&self, count: usize) -> Vec<f64> {
        let m = self.marginal();
        (1..=count)
            .map(|i| m.eval(i as f64 / count as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelSpec {
    Constant {
        value: f64,
    },
    Product {
        lambda1: ExprSpec,
        lambda2: ExprSpec,
    },
    Table {
        path: String,
    },
}

impl KernelSpec {
    pub fn build(&self) -> Result<RateKernel, String> {
        match self {
            KernelSpec::Constant { value } => {
                RateKernel::constant(*value).map_err(|e| e.to_string())
            }
            KernelSpec::Product { lambda1, lambda2 } => {
                Ok(RateKernel::product(lambda1.marginal(), lambda2.marginal()))
            }
            KernelSpec::Table { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read kernel table `{path}`: {e}"))?;
                nurn_core::kernel::table_from_csv(&text).map_err(|e| e.to_string())
            }
        }
    }
}

/// Named test functions for the fluctuation commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunctionId {
    One,
    Linear,
    Sin,
}

impl TestFunctionId {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunctionId::One => 1.0,
            TestFunctionId::Linear => x,
            TestFunctionId::Sin => (2.0 * std::f64::consts::PI * x).sin(),
        }
    }

    pub fn sample(&self, count: usize) -> Vec<f64> {
        (1..=count)
            .map(|i| self.eval(i as f64 / count as f64))
            .collect()
    }

    pub fn name(&self) -> &'static str {
        match self {
            TestFunctionId::One => "one",
            TestFunctionId::Linear => "linear",
            TestFunctionId::Sin => "sin",
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "one" => Ok(TestFunctionId::One),
            "linear" => Ok(TestFunctionId::Linear),
            "sin" => Ok(TestFunctionId::Sin),
            other => Err(format!("unknown test function `{other}` (one|linear|sin)")),
        }
    }
}

/// Trial control fields for the dynamic-rate lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialFieldId {
    Constant,
    LinearX,
    SinX,
}

impl TrialFieldId {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TrialFieldId::Constant => 0.0,
            TrialFieldId::LinearX => x,
            TrialFieldId::SinX => (2.0 * std::f64::consts::PI * x).sin(),
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "constant" => Ok(TrialFieldId::Constant),
            "linear-x" => Ok(TrialFieldId::LinearX),
            "sin-x" => Ok(TrialFieldId::SinX),
            other => Err(format!(
                "unknown trial field `{other}` (constant|linear-x|sin-x)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HydroMethod {
    Rk4,
    Expm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HydroOptions {
    pub method: HydroMethod,
}

impl Default for HydroOptions {
    fn default() -> Self {
        HydroOptions {
            method: HydroMethod::Rk4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CltOptions {
    pub t: f64,
    pub s_steps: usize,
    pub test_function: TestFunctionId,
}

impl Default for CltOptions {
    fn default() -> Self {
        CltOptions {
            t: 1.0,
            s_steps: 100,
            test_function: TestFunctionId::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdpOptions {
    /// Path density CSV (time,x,psi); when empty the hydrodynamic path of
    /// (phi, kernel) over the horizon is analyzed.
    pub path_csv: String,
    /// Companion derivative CSV (time,x,dpsi); optional.
    pub dpsi_csv: String,
    pub trial_family: Vec<TrialFieldId>,
}

impl Default for LdpOptions {
    fn default() -> Self {
        LdpOptions {
            path_csv: String::new(),
            dpsi_csv: String::new(),
            trial_family: vec![
                TrialFieldId::Constant,
                TrialFieldId::LinearX,
                TrialFieldId::SinX,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MartingaleOptions {
    pub n: usize,
    pub replicas: usize,
    /// Time-constant tilt exponent G(x).
    pub g: ExprSpec,
}

impl Default for MartingaleOptions {
    fn default() -> Self {
        MartingaleOptions {
            n: 5,
            replicas: 100_000,
            g: ExprSpec::Affine { a: 0.0, b: 0.2 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Box count of the particle system.
    pub n: usize,
    /// Grid size of the deterministic solvers.
    pub m: usize,
    pub dt: f64,
    pub horizon: f64,
    pub sample_times: Vec<f64>,
    pub replicas: usize,
    /// Worker threads; 0 keeps the library default.
    pub threads: usize,
    pub kernel: KernelSpec,
    pub phi: ExprSpec,
    pub hydro: HydroOptions,
    pub clt: CltOptions,
    pub ldp: LdpOptions,
    pub martingale: MartingaleOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            n: 100,
            m: 200,
            dt: 1e-3,
            horizon: 1.0,
            sample_times: vec![0.25, 0.5, 0.75, 1.0],
            replicas: 1000,
            threads: 0,
            kernel: KernelSpec::Constant { value: 1.0 },
            phi: ExprSpec::Constant { value: 1.0 },
            hydro: HydroOptions::default(),
            clt: CltOptions::default(),
            ldp: LdpOptions::default(),
            martingale: MartingaleOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("config parse error: {e}"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Collect every validation problem, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.n == 0 {
            problems.push("n must be >= 1".into());
        }
        if self.m < 2 {
            problems.push("m must be >= 2".into());
        }
        if !(self.dt > 0.0) {
            problems.push(format!("dt = {} must be > 0", self.dt));
        }
        if !(self.horizon > 0.0) {
            problems.push(format!("horizon = {} must be > 0", self.horizon));
        }
        if self.replicas == 0 {
            problems.push("replicas must be >= 1".into());
        }
        let mut prev = -1.0;
        for &t in &self.sample_times {
            if !(0.0..=self.horizon).contains(&t) {
                problems.push(format!("sample time {t} outside [0, {}]", self.horizon));
            }
            if t <= prev {
                problems.push(format!("sample times not strictly increasing at {t}"));
            }
            prev = t;
        }
        match &self.kernel {
            KernelSpec::Constant { value } if !(*value > 0.0) => {
                problems.push(format!("constant kernel value {value} must be > 0"));
            }
            KernelSpec::Table { path } if !std::path::Path::new(path).exists() => {
                problems.push(format!("kernel table `{path}` does not exist"));
            }
            _ => {}
        }
        if self.clt.s_steps == 0 {
            problems.push("clt.s_steps must be >= 1".into());
        }
        if self.clt.t < 0.0 || self.clt.t > self.horizon {
            problems.push(format!(
                "clt.t = {} outside [0, horizon = {}]",
                self.clt.t, self.horizon
            ));
        }
        if !self.ldp.path_csv.is_empty() && !std::path::Path::new(&self.ldp.path_csv).exists() {
            problems.push(format!(
                "ldp.path_csv `{}` does not exist",
                self.ldp.path_csv
            ));
        }
        if !self.ldp.dpsi_csv.is_empty() && !std::path::Path::new(&self.ldp.dpsi_csv).exists() {
            problems.push(format!(
                "ldp.dpsi_csv `{}` does not exist",
                self.ldp.dpsi_csv
            ));
        }
        if self.martingale.n == 0 {
            problems.push("martingale.n must be >= 1".into());
        }
        if self.martingale.replicas < 2 {
            problems.push("martingale.replicas must be >= 2".into());
        }
        problems
    }

    pub fn build_kernel(&self) -> Result<RateKernel, String> {
        self.kernel.build()
    }

    /// FNV-1a hash of the canonical serialized form; stamped into every
    /// output file so results can be traced to their exact configuration.
    pub fn hash(&self) -> u64 {
        let text = self.to_toml();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn kernel_specs_parse_from_toml() {
        let text = r#"
            [kernel]
            type = "product"
            lambda1 = { expr = "affine", a = 1.0, b = 1.0 }
            lambda2 = { expr = "affine", a = 2.0, b = -1.0 }

            [phi]
            expr = "affine"
            a = 1.0
            b = 0.5
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let k = cfg.build_kernel().unwrap();
        assert_eq!(k.eval(0.5, 1.0).unwrap(), 1.5);
        assert_eq!(cfg.phi.sample(2), vec![1.25, 1.5]);
    }

    #[test]
    fn validation_reports_every_problem() {
        let cfg = ExperimentConfig {
            n: 0,
            dt: 0.0,
            replicas: 0,
            sample_times: vec![0.5, 0.25, 9.0],
            ..ExperimentConfig::default()
        };
        let problems = cfg.validate();
        assert!(problems.len() >= 5, "collected only {problems:?}");
    }
}
