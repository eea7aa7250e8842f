//! Experiment configuration: a flat `key = value` text format whose keys
//! mirror the command-line flags.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{OcpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Newton,
    NewtonEps,
    NewtonRas,
    NewtonRasEps,
    Raspen,
    RaspenEps,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Newton,
        Method::NewtonEps,
        Method::NewtonRas,
        Method::NewtonRasEps,
        Method::Raspen,
        Method::RaspenEps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Newton => "newton",
            Method::NewtonEps => "newton-eps",
            Method::NewtonRas => "newton-ras",
            Method::NewtonRasEps => "newton-ras-eps",
            Method::Raspen => "raspen",
            Method::RaspenEps => "raspen-eps",
        }
    }

    pub fn uses_continuation(self) -> bool {
        matches!(
            self,
            Method::NewtonEps | Method::NewtonRasEps | Method::RaspenEps
        )
    }

    pub fn uses_decomposition(self) -> bool {
        !matches!(self, Method::Newton | Method::NewtonEps)
    }

    pub fn is_raspen(self) -> bool {
        matches!(self, Method::Raspen | Method::RaspenEps)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = OcpError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| OcpError::Config(format!("unknown method '{s}'")))
    }
}

/// Linear solver of the monolithic Newton methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearMode {
    Gmres,
    Direct,
}

impl FromStr for LinearMode {
    type Err = OcpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmres" => Ok(LinearMode::Gmres),
            "direct" => Ok(LinearMode::Direct),
            _ => Err(OcpError::Config(format!("unknown linear solver '{s}'"))),
        }
    }
}

/// Subdomain layout `rows × cols`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub rows: usize,
    pub cols: usize,
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl FromStr for Layout {
    type Err = OcpError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || OcpError::Config(format!("subdomains must look like RxC, got '{s}'"));
        let (r, c) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let rows = r.trim().parse().map_err(|_| bad())?;
        let cols = c.trim().parse().map_err(|_| bad())?;
        if rows == 0 || cols == 0 {
            return Err(bad());
        }
        Ok(Layout { rows, cols })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub n: usize,
    pub kappa: f64,
    pub nu: f64,
    pub mu: f64,
    pub k_tilde: f64,
    pub eps_construct: f64,
    pub eps0: f64,
    pub eps_min: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub tol: f64,
    pub inner_tol: f64,
    /// First entry drives single runs; tables iterate over all of them.
    pub subdomains: Vec<Layout>,
    pub overlap: usize,
    pub linear: LinearMode,
    pub gmres_tol: f64,
    pub gmres_max_iters: usize,
    pub max_outer: usize,
    /// 0 lets the thread pool pick.
    pub threads: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: Method::NewtonEps,
            n: 64,
            kappa: 0.1,
            nu: 1e-6,
            mu: 1.0,
            k_tilde: 5.0,
            eps_construct: 1e-15,
            eps0: 1.0,
            eps_min: 1e-10,
            gamma: 0.2,
            sigma: 1.1,
            tol: 1e-10,
            inner_tol: 1e-8,
            subdomains: vec![Layout { rows: 2, cols: 2 }],
            overlap: 2,
            linear: LinearMode::Gmres,
            gmres_tol: 1e-12,
            gmres_max_iters: 3000,
            max_outer: 200,
            threads: 0,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| OcpError::Config(format!("bad value '{value}' for key '{key}'")))
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 21] = [
        "method",
        "n",
        "kappa",
        "nu",
        "mu",
        "k_tilde",
        "eps_construct",
        "eps0",
        "eps_min",
        "gamma",
        "sigma",
        "tol",
        "inner_tol",
        "subdomains",
        "overlap",
        "linear",
        "gmres_tol",
        "gmres_max_iters",
        "max_outer",
        "threads",
        "seed",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim().replace('-', "_").as_str() {
            "method" => self.method = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "kappa" => self.kappa = parse(key, value)?,
            "nu" => self.nu = parse(key, value)?,
            "mu" => self.mu = parse(key, value)?,
            "k_tilde" => self.k_tilde = parse(key, value)?,
            "eps_construct" => self.eps_construct = parse(key, value)?,
            "eps0" => self.eps0 = parse(key, value)?,
            "eps_min" => self.eps_min = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "inner_tol" => self.inner_tol = parse(key, value)?,
            "subdomains" => {
                self.subdomains = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "overlap" => self.overlap = parse(key, value)?,
            "linear" => self.linear = parse(key, value)?,
            "gmres_tol" => self.gmres_tol = parse(key, value)?,
            "gmres_max_iters" => self.gmres_max_iters = parse(key, value)?,
            "max_outer" => self.max_outer = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(OcpError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                OcpError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let layouts: Vec<String> = self.subdomains.iter().map(|l| l.to_string()).collect();
        let lines = [
            format!("method = {}", self.method),
            format!("n = {}", self.n),
            format!("kappa = {:?}", self.kappa),
            format!("nu = {:?}", self.nu),
            format!("mu = {:?}", self.mu),
            format!("k_tilde = {:?}", self.k_tilde),
            format!("eps_construct = {:?}", self.eps_construct),
            format!("eps0 = {:?}", self.eps0),
            format!("eps_min = {:?}", self.eps_min),
            format!("gamma = {:?}", self.gamma),
            format!("sigma = {:?}", self.sigma),
            format!("tol = {:?}", self.tol),
            format!("inner_tol = {:?}", self.inner_tol),
            format!("subdomains = {}", layouts.join(",")),
            format!("overlap = {}", self.overlap),
            format!(
                "linear = {}",
                match self.linear {
                    LinearMode::Gmres => "gmres",
                    LinearMode::Direct => "direct",
                }
            ),
            format!("gmres_tol = {:?}", self.gmres_tol),
            format!("gmres_max_iters = {}", self.gmres_max_iters),
            format!("max_outer = {}", self.max_outer),
            format!("threads = {}", self.threads),
            format!("seed = {}", self.seed),
        ];
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn layout(&self) -> Layout {
        self.subdomains[0]
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(OcpError::Config(msg));
        if self.n == 0 {
            return fail("n must be at least 1".into());
        }
        if !(self.nu > 0.0) || !(self.mu > 0.0) {
            return fail(format!(
                "nu and mu must be positive (nu={}, mu={})",
                self.nu, self.mu
            ));
        }
        if !(self.eps_min > 0.0) || !(self.eps0 >= self.eps_min) {
            return fail(format!(
                "need eps0 >= eps_min > 0 (eps0={}, eps_min={})",
                self.eps0, self.eps_min
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.sigma >= 1.0) {
            return fail(format!("sigma must be >= 1, got {}", self.sigma));
        }
        if !(self.tol > 0.0) || !(self.inner_tol > 0.0) || !(self.gmres_tol > 0.0) {
            return fail("tolerances must be positive".into());
        }
        if !(self.eps_construct >= 0.0) || !(self.k_tilde > 0.0) || !self.kappa.is_finite() {
            return fail("invalid test-problem parameters".into());
        }
        if self.subdomains.is_empty() {
            return fail("at least one subdomain layout is required".into());
        }
        if self.gmres_max_iters == 0 || self.max_outer == 0 {
            return fail("iteration caps must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("newton-fast".parse::<Method>().is_err());
    }

    #[test]
    fn layout_parsing() {
        assert_eq!(
            "2x4".parse::<Layout>().unwrap(),
            Layout { rows: 2, cols: 4 }
        );
        assert!("2x0".parse::<Layout>().is_err());
        assert!("22".parse::<Layout>().is_err());
    }

    #[test]
    fn text_round_trip() {
        let cfg = ExperimentConfig {
            method: Method::RaspenEps,
            nu: 1.2345678901234567e-7,
            subdomains: vec![Layout { rows: 2, cols: 2 }, Layout { rows: 2, cols: 5 }],
            linear: LinearMode::Direct,
            ..Default::default()
        };
        let back = ExperimentConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_and_errors() {
        let cfg =
            ExperimentConfig::from_text("# header\nn = 32  # grid\n\neps_min=1e-5\n").unwrap();
        assert_eq!(cfg.n, 32);
        assert_eq!(cfg.eps_min, 1e-5);
        assert!(ExperimentConfig::from_text("n 32").is_err());
        assert!(ExperimentConfig::from_text("colour = red").is_err());
        assert!(ExperimentConfig::from_text("n = many").is_err());
        assert!(ExperimentConfig::from_text("eps0 = 1e-9\neps_min = 1e-3").is_err());
        assert!(ExperimentConfig::from_text("gamma = 5").is_err());
    }
}
