//! Actor-critic parameters, the softmax policy and the policy file format.
//!
//! Policy files are line-oriented UTF-8:
//!
//! ```text
//! krylovrl-policy
//! schema_version 1
//! actions 1 2 4 8 16 32 64 128
//! actor 3
//! layer 6 64 tanh
//! weights <64*6 decimals, row-major>
//! bias <64 decimals>
//! ...
//! critic 3
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mlp::{Activation, Layer, Mlp};
use crate::error::{Error, Result};
use crate::fgmres::OBS_DIM;

pub const SCHEMA_VERSION: u32 = 1;
const MAGIC: &str = "krylovrl-policy";

/// Hidden layer widths of the default actor and critic.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

/// Candidate block sizes, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    sizes: Vec<usize>,
}

impl Default for ActionSpace {
    fn default() -> Self {
        Self {
            sizes: vec![1, 2, 4, 8, 16, 32, 64, 128],
        }
    }
}

impl ActionSpace {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes[0] == 0 || !sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(format!(
                "action sizes must be non-empty, positive and strictly ascending: {sizes:?}"
            )));
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn max(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    /// Block size for an action, clamped to the system dimension.
    pub fn block_size(&self, index: usize, n: usize) -> usize {
        self.sizes[index].min(n).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParameters {
    pub schema_version: u32,
    pub actions: ActionSpace,
    pub actor: Mlp,
    pub critic: Mlp,
}

impl PolicyParameters {
    /// Zero-weight actor and critic (uniform policy, zero value).
    pub fn zeros(actions: ActionSpace, hidden: &[usize]) -> Self {
        let (actor_sizes, critic_sizes) = layer_sizes(actions.len(), hidden);
        Self {
            schema_version: SCHEMA_VERSION,
            actions,
            actor: Mlp::zeros(&actor_sizes),
            critic: Mlp::zeros(&critic_sizes),
        }
    }

    /// Seeded initialization; the actor output layer is scaled down so the
    /// initial policy is close to uniform.
    pub fn init(actions: ActionSpace, hidden: &[usize], seed: u64) -> Self {
        let (actor_sizes, critic_sizes) = layer_sizes(actions.len(), hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Mlp::init(&actor_sizes, 0.01, &mut rng);
        let critic = Mlp::init(&critic_sizes, 1.0, &mut rng);
        Self {
            schema_version: SCHEMA_VERSION,
            actions,
            actor,
            critic,
        }
    }

    /// Errors unless the policy was built for exactly `space`.
    pub fn check_action_space(&self, space: &ActionSpace) -> Result<()> {
        if &self.actions != space {
            return Err(Error::PolicyShape(format!(
                "policy actions {:?} do not match requested {:?}",
                self.actions.sizes(),
                space.sizes()
            )));
        }
        Ok(())
    }

    fn check_shapes(&self) -> Result<()> {
        let shape = |msg: String| Err(Error::PolicyShape(msg));
        if self.actor.input_dim() != OBS_DIM || self.critic.input_dim() != OBS_DIM {
            return shape(format!("networks must take {OBS_DIM} inputs"));
        }
        if self.actor.output_dim() != self.actions.len() {
            return shape(format!(
                "actor has {} outputs for {} actions",
                self.actor.output_dim(),
                self.actions.len()
            ));
        }
        if self.critic.output_dim() != 1 {
            return shape(format!("critic has {} outputs, expected 1", self.critic.output_dim()));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.actor.all_finite() && self.critic.all_finite()
    }

    /// Action probabilities and value estimate for one observation.
    pub fn forward(&self, obs: &[f64; OBS_DIM]) -> (Vec<f64>, f64) {
        (softmax(&self.actor.forward(obs)), self.critic.forward(obs)[0])
    }

    /// Index of the most probable action; ties go to the smaller index.
    pub fn greedy_action(&self, obs: &[f64; OBS_DIM]) -> usize {
        let logits = self.actor.forward(obs);
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        best
    }

    /// `log π(action | obs)` and its gradient with respect to the actor.
    pub fn log_prob_gradient(&self, obs: &[f64; OBS_DIM], action: usize) -> (f64, Mlp) {
        let cache = self.actor.forward_cached(obs);
        let probs = softmax(cache.output());
        let mut d: Vec<f64> = probs.iter().map(|p| -p).collect();
        d[action] += 1.0;
        let mut grad = self.actor.zeros_like();
        self.actor.backward(&cache, &d, &mut grad);
        (probs[action].ln(), grad)
    }

    /// `V(obs)` and its gradient with respect to the critic.
    pub fn value_gradient(&self, obs: &[f64; OBS_DIM]) -> (f64, Mlp) {
        let cache = self.critic.forward_cached(obs);
        let mut grad = self.critic.zeros_like();
        self.critic.backward(&cache, &[1.0], &mut grad);
        (cache.output()[0], grad)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "schema_version {}", self.schema_version);
        let _ = writeln!(out, "actions {}", join(self.actions.sizes().iter()));
        write_net(&mut out, "actor", &self.actor);
        write_net(&mut out, "critic", &self.critic);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| Error::PolicyParse {
                line: 0,
                message: format!("unexpected end of file, expected {what}"),
            })
        };

        let (_, magic) = next("header")?;
        if magic != MAGIC {
            return Err(Error::PolicyVersion(format!(
                "missing `{MAGIC}` header (found `{magic}`)"
            )));
        }
        let (line, version) = next("schema_version")?;
        let version = match version.split_once(' ') {
            Some(("schema_version", v)) => v.trim().parse::<u32>().map_err(|e| {
                Error::PolicyVersion(format!("line {line}: unreadable schema version: {e}"))
            })?,
            _ => {
                return Err(Error::PolicyVersion(format!(
                    "line {line}: expected `schema_version N`"
                )))
            }
        };
        if version != SCHEMA_VERSION {
            return Err(Error::PolicyVersion(format!(
                "file has schema_version {version}, this build reads {SCHEMA_VERSION}"
            )));
        }
        let (line, actions) = next("actions")?;
        let sizes: Vec<usize> = parse_list(keyed(actions, "actions", line)?, line)?;
        let actions = ActionSpace::new(sizes).map_err(|e| Error::PolicyShape(e.to_string()))?;
        let actor = read_net(&mut next, "actor")?;
        let critic = read_net(&mut next, "critic")?;
        let params = Self {
            schema_version: version,
            actions,
            actor,
            critic,
        };
        params.check_shapes()?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn layer_sizes(n_actions: usize, hidden: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut actor = vec![OBS_DIM];
    actor.extend_from_slice(hidden);
    let mut critic = actor.clone();
    actor.push(n_actions);
    critic.push(1);
    (actor, critic)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `policy_forward`: action probabilities and value estimate.
pub fn policy_forward(params: &PolicyParameters, obs: &[f64; OBS_DIM]) -> (Vec<f64>, f64) {
    params.forward(obs)
}

/// Inverse-CDF draw over `probs` in listed order. Returns the index and
/// `ln probs[index]`.
pub fn sample_action<R: Rng>(probs: &[f64], rng: &mut R) -> (usize, f64) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            chosen = Some(i);
            break;
        }
    }
    // Rounding can leave the total just below u; fall back to the last
    // action with positive mass.
    let idx = chosen.unwrap_or_else(|| {
        probs
            .iter()
            .rposition(|&p| p > 0.0)
            .expect("distribution has positive mass")
    });
    (idx, probs[idx].ln())
}

fn join<T: std::fmt::Display>(items: impl Iterator<Item = T>) -> String {
    let mut s = String::new();
    for (i, v) in items.enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

fn write_net(out: &mut String, name: &str, net: &Mlp) {
    let _ = writeln!(out, "{name} {}", net.layers.len());
    for l in &net.layers {
        let _ = writeln!(out, "layer {} {} {}", l.n_in, l.n_out, l.activation.name());
        let _ = writeln!(out, "weights {}", join(l.weights.iter().map(Sci)));
        let _ = writeln!(out, "bias {}", join(l.bias.iter().map(Sci)));
    }
}

/// Shortest round-trip scientific formatting.
struct Sci<'a>(&'a f64);

impl std::fmt::Display for Sci<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:e}", self.0)
    }
}

fn keyed<'a>(line: &'a str, key: &str, line_no: usize) -> Result<&'a str> {
    match line.split_once(' ') {
        Some((k, rest)) if k == key => Ok(rest),
        None if line == key => Ok(""),
        _ => Err(Error::PolicyParse {
            line: line_no,
            message: format!("expected `{key} ...`, found `{line}`"),
        }),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, line: usize) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split_whitespace()
        .map(|t| {
            t.parse::<T>().map_err(|e| Error::PolicyParse {
                line,
                message: format!("bad value `{t}`: {e}"),
            })
        })
        .collect()
}

fn read_net<'a>(
    next: &mut impl FnMut(&str) -> Result<(usize, &'a str)>,
    name: &str,
) -> Result<Mlp> {
    let (line, head) = next(name)?;
    let count: Vec<usize> = parse_list(keyed(head, name, line)?, line)?;
    let [count] = count[..] else {
        return Err(Error::PolicyParse {
            line,
            message: format!("expected `{name} <layer count>`"),
        });
    };
    if count == 0 {
        return Err(Error::PolicyShape(format!("{name} has no layers")));
    }
    let mut layers: Vec<Layer> = Vec::with_capacity(count);
    for _ in 0..count {
        let (line, header) = next("layer")?;
        let parts: Vec<&str> = keyed(header, "layer", line)?.split_whitespace().collect();
        let [n_in, n_out, act] = parts[..] else {
            return Err(Error::PolicyParse {
                line,
                message: "expected `layer <in> <out> <activation>`".into(),
            });
        };
        let dims: Vec<usize> = parse_list(&format!("{n_in} {n_out}"), line)?;
        let activation = Activation::parse(act).ok_or_else(|| Error::PolicyParse {
            line,
            message: format!("unknown activation `{act}`"),
        })?;
        let (n_in, n_out) = (dims[0], dims[1]);
        if let Some(prev) = layers.last() {
            if prev.n_out != n_in {
                return Err(Error::PolicyShape(format!(
                    "{name}: layer input {n_in} does not match previous output {}",
                    prev.n_out
                )));
            }
        }
        let (wl, w) = next("weights")?;
        let weights: Vec<f64> = parse_list(keyed(w, "weights", wl)?, wl)?;
        let (bl, b) = next("bias")?;
        let bias: Vec<f64> = parse_list(keyed(b, "bias", bl)?, bl)?;
        if weights.len() != n_in * n_out || bias.len() != n_out {
            return Err(Error::PolicyShape(format!(
                "{name}: layer {n_in}x{n_out} has {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::PolicyParse {
                line: wl,
                message: "non-finite weight".into(),
            });
        }
        layers.push(Layer {
            n_in,
            n_out,
            weights,
            bias,
            activation,
        });
    }
    Ok(Mlp { layers })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_obs(rng: &mut ChaCha8Rng) -> [f64; OBS_DIM] {
        std::array::from_fn(|_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn zero_weights_give_uniform() {
        let p = PolicyParameters::zeros(ActionSpace::default(), &DEFAULT_HIDDEN);
        let (probs, v) = p.forward(&[0.3; OBS_DIM]);
        for q in probs {
            assert!((q - 0.125).abs() < 1e-15);
        }
        assert_eq!(v, 0.0);
    }

    #[test]
    fn probabilities_are_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..10 {
            let mut p = PolicyParameters::init(ActionSpace::default(), &[16, 16], seed);
            for w in p.actor.params_mut() {
                *w *= 30.0;
            }
            let (probs, _) = p.forward(&random_obs(&mut rng));
            assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(probs.iter().all(|&q| q > 0.0));
        }
    }

    #[test]
    fn degenerate_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(sample_action(&[1.0, 0.0, 0.0], &mut rng), (0, 0.0));
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let probs = [0.2, 0.5, 0.3];
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_action(&probs, &mut rng).0).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
        assert_ne!(draw(4), draw(5));
    }

    #[test]
    fn empirical_frequencies_match() {
        let probs = [0.1, 0.25, 0.05, 0.6];
        let n = 100_000;
        let mut counts = [0usize; 4];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..n {
            let (i, lp) = sample_action(&probs, &mut rng);
            assert_eq!(lp, probs[i].ln());
            counts[i] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() <= 3.0 * sd, "{c} vs {p}");
        }
    }

    #[test]
    fn text_round_trip_preserves_weights() {
        let p = PolicyParameters::init(ActionSpace::new(vec![1, 4, 16]).unwrap(), &[8, 5], 3);
        let back = PolicyParameters::from_text(&p.to_text()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn corrupted_header_is_version_error() {
        let p = PolicyParameters::init(ActionSpace::default(), &[4], 3);
        let text = p.to_text().replacen(MAGIC, "krylovrl-po1icy", 1);
        assert!(matches!(PolicyParameters::from_text(&text), Err(Error::PolicyVersion(_))));
        let text = p.to_text().replacen("schema_version 1", "schema_version 7", 1);
        assert!(matches!(PolicyParameters::from_text(&text), Err(Error::PolicyVersion(_))));
    }

    #[test]
    fn shape_and_parse_errors_are_distinct() {
        let p = PolicyParameters::init(ActionSpace::new(vec![1, 2]).unwrap(), &[3], 3);
        let text = p.to_text().replacen("actions 1 2", "actions 1 2 4", 1);
        assert!(matches!(PolicyParameters::from_text(&text), Err(Error::PolicyShape(_))));

        let text = p.to_text().replacen("bias 0e0", "bias zero", 1);
        assert!(matches!(
            PolicyParameters::from_text(&text),
            Err(Error::PolicyParse { .. })
        ));

        let truncated: String = p.to_text().lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            PolicyParameters::from_text(&truncated),
            Err(Error::PolicyParse { .. })
        ));

        assert!(matches!(
            p.check_action_space(&ActionSpace::default()),
            Err(Error::PolicyShape(_))
        ));
        assert!(p.check_action_space(&ActionSpace::new(vec![1, 2]).unwrap()).is_ok());
    }

    #[test]
    fn action_space_validation() {
        assert!(ActionSpace::new(vec![]).is_err());
        assert!(ActionSpace::new(vec![0, 1]).is_err());
        assert!(ActionSpace::new(vec![4, 2]).is_err());
        let s = ActionSpace::default();
        assert_eq!(s.block_size(7, 100), 100);
        assert_eq!(s.block_size(7, 1000), 128);
    }
}
