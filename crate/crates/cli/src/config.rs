use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use tedecomp::boolnet::{builtin, simulate_seeded, NetworkSpec};
use tedecomp::decomposer::{Architecture, Pair, SchemeConfig};
use tedecomp::series::{load_csv, zscore, ChannelRoles, MultiSeries};

use crate::error::{CliError, CliResult};

fn default_steps() -> usize {
    10_000
}

fn default_seed() -> u64 {
    1
}

fn default_wiring() -> u64 {
    7
}

fn default_preset() -> String {
    "synthetic".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Where the time series comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A built-in network (`fig2a`, `fig2b`, `fig2c`).
    Builtin {
        network: String,
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_seed")]
        seed: u64,
        /// Wiring seed for `fig2c`.
        #[serde(default = "default_wiring")]
        wiring_seed: u64,
    },
    /// A network given inline.
    Network {
        spec: NetworkSpec,
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        zscore: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleNames {
    pub source: Vec<String>,
    pub target: Vec<String>,
    #[serde(default)]
    pub cond: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairwiseSettings {
    /// Explicit pairs; otherwise every ordered pair of `channels`.
    pub pairs: Option<Vec<Pair>>,
    /// Channels to pair up; all channels when absent.
    pub channels: Option<Vec<String>>,
    /// Training steps per model; the scheme's schedule length when absent.
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceSettings {
    /// β of the operating point; the share point of the run when absent.
    pub beta: Option<f64>,
    /// Parameter checkpoint stem written by `decompose`.
    pub checkpoint: Option<PathBuf>,
}

/// Settings of the acceptance suite run by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySettings {
    pub trajectory_steps: usize,
    pub trajectory_seed: u64,
    /// Trajectory length for the pairwise and trace cross-checks.
    pub crosscheck_steps: usize,
    pub fig2c_wiring_seed: u64,
    pub anneal_steps: usize,
    pub pairwise_steps: usize,
    pub learning_rate: f64,
    pub architecture: String,
    pub run_seed: u64,
    pub degeneracy_seeds: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            trajectory_steps: 10_000,
            trajectory_seed: 1,
            crosscheck_steps: 100_000,
            fig2c_wiring_seed: 7,
            anneal_steps: 8_000,
            pairwise_steps: 3_000,
            learning_rate: 1e-3,
            architecture: "compact".into(),
            run_seed: 0,
            degeneracy_seeds: 10,
        }
    }
}

/// One experiment, as read from JSON. `scheme` holds overrides applied on
/// top of `preset`; `architecture` may name a preset instead of listing
/// widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default)]
    pub roles: Option<RoleNames>,
    #[serde(default)]
    pub tau: Option<usize>,
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default)]
    pub scheme: Map<String, Value>,
    /// Seeds to run; the scheme seed alone when empty.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub pairwise: PairwiseSettings,
    #[serde(default)]
    pub trace: TraceSettings,
    #[serde(default)]
    pub verify: VerifySettings,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

/// Architecture by preset name.
pub fn architecture(name: &str) -> Option<Architecture> {
    match name {
        "synthetic" => Some(Architecture::synthetic()),
        "continuous" => Some(Architecture::continuous()),
        "compact" => Some(Architecture::compact()),
        _ => None,
    }
}

/// Keys in `value` absent from `template`, recursing through objects both
/// sides share.
fn unknown_keys(value: &Value, template: &Value, path: &str, out: &mut Vec<String>) {
    if let (Value::Object(v), Value::Object(t)) = (value, template) {
        for (k, sub) in v {
            let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            match t.get(k) {
                Some(ts) => unknown_keys(sub, ts, &p, out),
                None => out.push(format!("unknown key '{p}'")),
            }
        }
    }
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

impl ExperimentConfig {
    pub fn builtin(network: &str) -> Self {
        Self {
            data: DataSource::Builtin {
                network: network.into(),
                steps: default_steps(),
                seed: default_seed(),
                wiring_seed: default_wiring(),
            },
            roles: None,
            tau: None,
            preset: default_preset(),
            scheme: Map::new(),
            seeds: Vec::new(),
            pairwise: PairwiseSettings::default(),
            trace: TraceSettings::default(),
            verify: VerifySettings::default(),
            output: default_output(),
        }
    }

    /// Shape used to spot unknown keys: every optional section filled in.
    fn template() -> Value {
        let mut c = Self::builtin("fig2a");
        c.roles = Some(RoleNames {
            source: vec![],
            target: vec![],
            cond: vec![],
        });
        c.tau = Some(3);
        c.pairwise = PairwiseSettings {
            pairs: Some(vec![]),
            channels: Some(vec![]),
            steps: Some(1),
        };
        c.trace = TraceSettings {
            beta: Some(1.0),
            checkpoint: Some(PathBuf::new()),
        };
        let mut v = serde_json::to_value(c).expect("serializable");
        v["scheme"] = serde_json::to_value(SchemeConfig::synthetic()).expect("serializable");
        // Data variants are checked by serde itself.
        v["data"] = Value::Null;
        v
    }

    /// Parses and validates, reporting every problem found.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))?;
        let mut problems = Vec::new();
        unknown_keys(&value, &Self::template(), "", &mut problems);
        if !problems.is_empty() {
            return Err(CliError::Config(problems));
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| CliError::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Preset plus overrides, with `tau` applied.
    pub fn scheme(&self) -> CliResult<SchemeConfig> {
        let base = SchemeConfig::preset(&self.preset).map_err(|e| CliError::Config(vec![e.to_string()]))?;
        let mut v = serde_json::to_value(base).expect("serializable");
        let mut over = Value::Object(self.scheme.clone());
        if let Some(Value::String(name)) = over.get("architecture").cloned() {
            let arch = architecture(&name)
                .ok_or_else(|| CliError::Config(vec![format!("unknown architecture preset '{name}'")]))?;
            over["architecture"] = serde_json::to_value(arch).expect("serializable");
            v["architecture"] = Value::Null;
        }
        merge(&mut v, &over);
        let mut scheme: SchemeConfig =
            serde_json::from_value(v).map_err(|e| CliError::Config(vec![format!("scheme: {e}")]))?;
        if let Some(tau) = self.tau {
            scheme.tau = tau;
        }
        Ok(scheme)
    }

    pub fn seeds(&self) -> CliResult<Vec<u64>> {
        if self.seeds.is_empty() {
            Ok(vec![self.scheme()?.seed])
        } else {
            Ok(self.seeds.clone())
        }
    }

    fn network_spec(&self) -> Option<Result<NetworkSpec, String>> {
        match &self.data {
            DataSource::Builtin {
                network, wiring_seed, ..
            } => Some(builtin(network, *wiring_seed).map_err(|e| e.to_string())),
            DataSource::Network { spec, .. } => Some(spec.validate().map(|_| spec.clone()).map_err(|e| e.to_string())),
            DataSource::Csv { .. } => None,
        }
    }

    /// Channel names known before loading any data.
    fn channel_names(&self) -> Option<Vec<String>> {
        match self.network_spec() {
            Some(Ok(spec)) => Some(spec.names()),
            Some(Err(_)) => None,
            None => None,
        }
    }

    /// Every violated precondition.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        match self.scheme() {
            Ok(s) => v.extend(s.violations().into_iter().map(|m| format!("scheme: {m}"))),
            Err(CliError::Config(m)) => v.extend(m),
            Err(e) => v.push(e.to_string()),
        }
        if self.tau == Some(0) {
            v.push("tau must be at least 1".into());
        }
        let tau = self.scheme().map(|s| s.tau).unwrap_or(1);
        match &self.data {
            DataSource::Builtin { steps, .. } | DataSource::Network { steps, .. } => {
                if *steps < 2 * tau + 2 {
                    v.push(format!("data.steps {steps} too short for tau {tau}"));
                }
                if let Some(Err(e)) = self.network_spec() {
                    v.push(format!("data: {e}"));
                }
            }
            DataSource::Csv { path, .. } => {
                if !path.exists() {
                    v.push(format!("data.path '{}' does not exist", path.display()));
                }
                if self.roles.is_none() {
                    v.push("roles are required for CSV data".into());
                }
            }
        }
        let names = self.channel_names();
        if let Some(r) = &self.roles {
            if r.target.is_empty() {
                v.push("roles.target is empty".into());
            }
            let all: Vec<&String> = r.source.iter().chain(&r.target).chain(&r.cond).collect();
            for (i, a) in all.iter().enumerate() {
                if all[..i].contains(a) {
                    v.push(format!("channel '{a}' assigned to more than one role"));
                }
            }
            if let Some(names) = &names {
                for a in &all {
                    if !names.contains(a) {
                        v.push(format!("roles: unknown channel '{a}'"));
                    }
                }
            }
        }
        if let Some(pairs) = &self.pairwise.pairs {
            for p in pairs {
                if p.source.is_empty() || p.target.is_empty() {
                    v.push(format!("pairwise: empty side in {:?} -> {:?}", p.source, p.target));
                }
                if p.source.iter().any(|s| p.target.contains(s)) {
                    v.push(format!("pairwise: {:?} -> {:?} shares channels", p.source, p.target));
                }
                if let Some(names) = &names {
                    for c in p.source.iter().chain(&p.target) {
                        if !names.contains(c) {
                            v.push(format!("pairwise: unknown channel '{c}'"));
                        }
                    }
                }
            }
        }
        if self.pairwise.steps == Some(0) {
            v.push("pairwise.steps must be at least 1".into());
        }
        if let Some(b) = self.trace.beta {
            if !(b > 0.0) {
                v.push(format!("trace.beta {b} must be positive"));
            }
        }
        if architecture(&self.verify.architecture).is_none() {
            v.push(format!("verify.architecture '{}' is not a preset", self.verify.architecture));
        }
        if self.verify.degeneracy_seeds == 0 || self.verify.anneal_steps == 0 {
            v.push("verify: seed count and step counts must be positive".into());
        }
        v
    }

    pub fn validate(&self) -> CliResult<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(v))
        }
    }

    pub fn load_series(&self) -> CliResult<MultiSeries> {
        Ok(match &self.data {
            DataSource::Builtin { steps, seed, .. } | DataSource::Network { steps, seed, .. } => {
                let spec = self.network_spec().expect("network source").map_err(|e| CliError::Config(vec![e]))?;
                simulate_seeded(&spec, *steps, *seed)?
            }
            DataSource::Csv { path, zscore: z } => {
                let s = load_csv(path)?;
                if *z {
                    zscore(&s)?
                } else {
                    s
                }
            }
        })
    }

    /// Role names from the config, or the network's own source and target.
    pub fn role_names(&self) -> CliResult<RoleNames> {
        if let Some(r) = &self.roles {
            return Ok(r.clone());
        }
        match self.network_spec() {
            Some(Ok(spec)) => Ok(RoleNames {
                source: spec.source.clone(),
                target: spec.target.clone(),
                cond: Vec::new(),
            }),
            Some(Err(e)) => Err(CliError::Config(vec![e])),
            None => Err(CliError::Config(vec!["roles are required for CSV data".into()])),
        }
    }

    pub fn roles(&self, series: &MultiSeries) -> CliResult<ChannelRoles> {
        let r = self.role_names()?;
        let roles = ChannelRoles::new(
            series.indices_of(&r.source)?,
            series.indices_of(&r.target)?,
            series.indices_of(&r.cond)?,
        );
        roles.validate(series.n_channels())?;
        Ok(roles)
    }
}
