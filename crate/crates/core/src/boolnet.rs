//! Synchronous Boolean recurrent networks.
//!
//! Every node's state at `t + 1` is a function of the full network state at
//! `t` (or a fresh coin flip for random nodes). Networks serialize to JSON
//! as a node list plus source/target name arrays.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MultiSeries;

/// Steps simulated and discarded before recording.
pub const BURN_IN: usize = 10;

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedInput {
    pub node: String,
    pub weight: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum NodeRule {
    /// Fires with probability `p`, independently every step.
    Random {
        #[serde(default = "half")]
        p: f64,
    },
    Xor { inputs: [String; 2] },
    Copy { input: String },
    /// Fires iff the signed sum of its inputs' previous states is > 0.
    IntegrateFire { inputs: Vec<WeightedInput> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    #[serde(flatten)]
    pub rule: NodeRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub nodes: Vec<NodeSpec>,
    pub source: Vec<String>,
    pub target: Vec<String>,
}

#[derive(Debug, Clone)]
enum Resolved {
    Random(f64),
    Xor(usize, usize),
    Copy(usize),
    IntegrateFire(Vec<(usize, i32)>),
}

impl NetworkSpec {
    pub fn names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| Error::Config(format!("unknown node '{name}'")))
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    fn resolve(&self) -> Result<Vec<Resolved>> {
        if self.nodes.is_empty() {
            return Err(Error::Config("network has no nodes".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if self.nodes[..i].iter().any(|m| m.name == n.name) {
                return Err(Error::Config(format!("duplicate node name '{}'", n.name)));
            }
        }
        for s in &self.source {
            self.index(s)?;
            if self.target.contains(s) {
                return Err(Error::Config(format!("node '{s}' is both source and target")));
            }
        }
        for t in &self.target {
            self.index(t)?;
        }
        self.nodes
            .iter()
            .map(|n| {
                Ok(match &n.rule {
                    NodeRule::Random { p } => {
                        if !(0.0..=1.0).contains(p) {
                            return Err(Error::Config(format!(
                                "node '{}' has firing probability {p}",
                                n.name
                            )));
                        }
                        Resolved::Random(*p)
                    }
                    NodeRule::Xor { inputs } => {
                        Resolved::Xor(self.index(&inputs[0])?, self.index(&inputs[1])?)
                    }
                    NodeRule::Copy { input } => Resolved::Copy(self.index(input)?),
                    NodeRule::IntegrateFire { inputs } => {
                        if inputs.is_empty() {
                            return Err(Error::Config(format!(
                                "integrate-and-fire node '{}' has no inputs",
                                n.name
                            )));
                        }
                        let mut r = Vec::with_capacity(inputs.len());
                        for wi in inputs {
                            if wi.weight != 1 && wi.weight != -1 {
                                return Err(Error::Config(format!(
                                    "node '{}' has weight {} (must be +1 or -1)",
                                    n.name, wi.weight
                                )));
                            }
                            r.push((self.index(&wi.node)?, wi.weight));
                        }
                        Resolved::IntegrateFire(r)
                    }
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Computes the next state. `draws[i]` is used for random node `i`;
/// deterministic nodes are evaluated in `order`, which cannot matter since
/// they only read `prev`.
fn advance(rules: &[Resolved], prev: &[u8], draws: &[u8], order: &[usize], next: &mut [u8]) {
    for &i in order {
        next[i] = match &rules[i] {
            Resolved::Random(_) => draws[i],
            Resolved::Xor(a, b) => prev[*a] ^ prev[*b],
            Resolved::Copy(a) => prev[*a],
            Resolved::IntegrateFire(inputs) => {
                let sum: i32 = inputs.iter().map(|&(j, w)| w * prev[j] as i32).sum();
                u8::from(sum > 0)
            }
        };
    }
}

fn simulate_with_order<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    steps: usize,
    rng: &mut R,
    order: &[usize],
) -> Result<MultiSeries> {
    if steps == 0 {
        return Err(Error::Config("steps must be at least 1".into()));
    }
    let rules = spec.resolve()?;
    let n = rules.len();
    let mut state: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
    let mut next = vec![0u8; n];
    let mut draws = vec![0u8; n];
    let mut values = Array2::<f64>::zeros((steps, n));
    for step in 0..BURN_IN + steps {
        if step >= BURN_IN {
            for (j, &b) in state.iter().enumerate() {
                values[[step - BURN_IN, j]] = f64::from(b);
            }
        }
        for (i, rule) in rules.iter().enumerate() {
            if let Resolved::Random(p) = rule {
                draws[i] = u8::from(rng.random_bool(*p));
            }
        }
        advance(&rules, &state, &draws, order, &mut next);
        std::mem::swap(&mut state, &mut next);
    }
    MultiSeries::binary(spec.names(), values)
}

/// Simulates `steps` recorded time steps after a burn-in of [`BURN_IN`].
/// The initial state is uniform over all binary configurations.
pub fn simulate<R: Rng + ?Sized>(spec: &NetworkSpec, steps: usize, rng: &mut R) -> Result<MultiSeries> {
    let order: Vec<usize> = (0..spec.nodes.len()).collect();
    simulate_with_order(spec, steps, rng, &order)
}

pub fn simulate_seeded(spec: &NetworkSpec, steps: usize, seed: u64) -> Result<MultiSeries> {
    simulate(spec, steps, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn node(name: &str, rule: NodeRule) -> NodeSpec {
    NodeSpec {
        name: name.to_string(),
        rule,
    }
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Two coins drive green through XOR; red copies green.
pub fn fig2a_spec() -> NetworkSpec {
    NetworkSpec {
        nodes: vec![
            node("blue", NodeRule::Random { p: 0.5 }),
            node("orange", NodeRule::Random { p: 0.5 }),
            node(
                "green",
                NodeRule::Xor {
                    inputs: ["blue".into(), "orange".into()],
                },
            ),
            node("red", NodeRule::Copy { input: "green".into() }),
        ],
        source: strings(&["blue", "orange"]),
        target: strings(&["green", "red"]),
    }
}

/// Same dynamics as [`fig2a_spec`], with red as the only target.
pub fn fig2b_spec() -> NetworkSpec {
    NetworkSpec {
        target: strings(&["red"]),
        ..fig2a_spec()
    }
}

/// Six-node integrate-and-fire network with seeded random wiring: random
/// sources `blue` and `orange`, hidden `grey1` and `grey2`, targets `green`
/// and `red`.
///
/// Each integrate-and-fire node receives two or three distinct inputs from
/// the previous step. The first input always carries weight +1 so the node
/// can fire; the rest are ±1 at random. Every hidden node listens to at least
/// one source, green listens to at least one hidden node and red to green or a
/// hidden node, so the sources reach both targets.
pub fn fig2c_spec(seed: u64) -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = ["blue", "orange"];
    let hidden = ["grey1", "grey2"];

    let mut wire = |anchor_pool: &[&str], extra_pool: &[&str]| -> Vec<WeightedInput> {
        let first = anchor_pool[rng.random_range(0..anchor_pool.len())];
        let mut picked = vec![first];
        let want = rng.random_range(2..=3usize);
        let mut candidates: Vec<&str> = extra_pool.iter().copied().filter(|c| *c != first).collect();
        while picked.len() < want && !candidates.is_empty() {
            let k = rng.random_range(0..candidates.len());
            picked.push(candidates.swap_remove(k));
        }
        picked
            .into_iter()
            .enumerate()
            .map(|(i, name)| WeightedInput {
                node: name.to_string(),
                weight: if i == 0 || rng.random_bool(0.5) { 1 } else { -1 },
            })
            .collect()
    };

    let grey1 = wire(&sources, &["blue", "orange", "grey1", "grey2"]);
    let grey2 = wire(&sources, &["blue", "orange", "grey1", "grey2"]);
    let green = wire(&hidden, &["blue", "orange", "grey1", "grey2", "red"]);
    let red = wire(&["green", "grey1", "grey2"], &["green", "grey1", "grey2", "red"]);

    NetworkSpec {
        nodes: vec![
            node("blue", NodeRule::Random { p: 0.5 }),
            node("orange", NodeRule::Random { p: 0.5 }),
            node("grey1", NodeRule::IntegrateFire { inputs: grey1 }),
            node("grey2", NodeRule::IntegrateFire { inputs: grey2 }),
            node("green", NodeRule::IntegrateFire { inputs: green }),
            node("red", NodeRule::IntegrateFire { inputs: red }),
        ],
        source: strings(&sources),
        target: strings(&["green", "red"]),
    }
}

/// Looks up a built-in network by id (`fig2a`, `fig2b`, `fig2c`).
pub fn builtin(id: &str, seed: u64) -> Result<NetworkSpec> {
    match id {
        "fig2a" => Ok(fig2a_spec()),
        "fig2b" => Ok(fig2b_spec()),
        "fig2c" => Ok(fig2c_spec(seed)),
        other => Err(Error::Config(format!("unknown built-in network '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(s: &MultiSeries, name: &str) -> Vec<u8> {
        let j = s.channel_index(name).unwrap();
        s.values().column(j).iter().map(|&v| v as u8).collect()
    }

    #[test]
    fn copy_chain() {
        let spec = NetworkSpec {
            nodes: vec![
                node("a", NodeRule::Random { p: 0.5 }),
                node("b", NodeRule::Copy { input: "a".into() }),
            ],
            source: strings(&["a"]),
            target: strings(&["b"]),
        };
        let s = simulate_seeded(&spec, 500, 1).unwrap();
        let (a, b) = (col(&s, "a"), col(&s, "b"));
        assert!((1..500).all(|t| b[t] == a[t - 1]));
    }

    #[test]
    fn fig2a_rules_hold() {
        let s = simulate_seeded(&fig2a_spec(), 10_000, 7).unwrap();
        let (b, o, g, r) = (col(&s, "blue"), col(&s, "orange"), col(&s, "green"), col(&s, "red"));
        for t in 1..10_000 {
            assert_eq!(g[t], b[t - 1] ^ o[t - 1]);
            assert_eq!(r[t], g[t - 1]);
        }
    }

    #[test]
    fn single_positive_integrate_fire_is_copy() {
        let spec = NetworkSpec {
            nodes: vec![
                node("a", NodeRule::Random { p: 0.5 }),
                node(
                    "b",
                    NodeRule::IntegrateFire {
                        inputs: vec![WeightedInput {
                            node: "a".into(),
                            weight: 1,
                        }],
                    },
                ),
            ],
            source: strings(&["a"]),
            target: strings(&["b"]),
        };
        let s = simulate_seeded(&spec, 300, 2).unwrap();
        let (a, b) = (col(&s, "a"), col(&s, "b"));
        assert!((1..300).all(|t| b[t] == a[t - 1]));
    }

    #[test]
    fn balanced_pair_does_not_fire() {
        let rules = vec![
            Resolved::Random(0.5),
            Resolved::Random(0.5),
            Resolved::IntegrateFire(vec![(0, 1), (1, -1)]),
        ];
        let mut next = [0u8; 3];
        advance(&rules, &[1, 1, 0], &[0, 0, 0], &[0, 1, 2], &mut next);
        assert_eq!(next[2], 0);
        advance(&rules, &[1, 0, 0], &[0, 0, 0], &[0, 1, 2], &mut next);
        assert_eq!(next[2], 1);
    }

    #[test]
    fn built_in_shapes() {
        let a = fig2a_spec();
        assert_eq!((a.nodes.len(), a.source.len(), a.target.len()), (4, 2, 2));
        assert_eq!(fig2b_spec().target, strings(&["red"]));

        let c = fig2c_spec(11);
        assert_eq!(c, fig2c_spec(11));
        assert_eq!(c.nodes.len(), 6);
        c.validate().unwrap();
        for n in &c.nodes {
            if n.name.starts_with("grey") {
                assert!(!matches!(n.rule, NodeRule::Random { .. }));
            }
        }
        assert!((0..20).any(|s| fig2c_spec(s) != c));
    }

    #[test]
    fn evaluation_order_is_irrelevant() {
        for spec in [fig2a_spec(), fig2c_spec(3)] {
            let n = spec.nodes.len();
            let forward: Vec<usize> = (0..n).collect();
            let backward: Vec<usize> = (0..n).rev().collect();
            let a = simulate_with_order(&spec, 400, &mut ChaCha8Rng::seed_from_u64(4), &forward).unwrap();
            let b = simulate_with_order(&spec, 400, &mut ChaCha8Rng::seed_from_u64(4), &backward).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn random_marginal_is_fair() {
        let s = simulate_seeded(&fig2a_spec(), 10_000, 99).unwrap();
        for name in ["blue", "orange"] {
            let m = col(&s, name).iter().map(|&b| b as f64).sum::<f64>() / 10_000.0;
            assert!((m - 0.5).abs() < 0.02, "{name} marginal {m}");
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let spec = fig2c_spec(5);
        let back = NetworkSpec::from_json(&spec.to_json().unwrap()).unwrap();
        assert_eq!(spec, back);

        let text = r#"{"nodes":[{"name":"a","rule":"random"},{"name":"b","rule":"copy","input":"zz"}],
                       "source":["a"],"target":["b"]}"#;
        assert!(matches!(NetworkSpec::from_json(text), Err(Error::Config(_))));
        let text = r#"{"nodes":[{"name":"a","rule":"random"}],"source":["a"],"target":["a"]}"#;
        assert!(NetworkSpec::from_json(text).is_err());
    }

    #[test]
    fn zero_steps_rejected() {
        assert!(simulate_seeded(&fig2a_spec(), 0, 1).is_err());
    }
}
