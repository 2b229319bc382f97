//! Parameter layout of a pathway as named flat arrays.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::neuron::Side;

/// The three PID pathways.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathwayKind {
    Proportional,
    Integral,
    Derivative,
}

impl PathwayKind {
    pub const ALL: [PathwayKind; 3] = [
        PathwayKind::Proportional,
        PathwayKind::Integral,
        PathwayKind::Derivative,
    ];

    /// Neurons per group: a (pos, neg) pair, two pairs for the derivative.
    pub fn neurons_per_group(self) -> usize {
        match self {
            PathwayKind::Derivative => 4,
            _ => 2,
        }
    }

    /// Input/output weights per group: one per sub-group.
    pub fn weights_per_group(self) -> usize {
        self.neurons_per_group() / 2
    }

    /// Number of (pos, neg) readout pairs.
    pub fn readout_pairs(self) -> usize {
        self.weights_per_group()
    }

    /// Short name used as prefix in parameter names.
    pub fn prefix(self) -> &'static str {
        match self {
            PathwayKind::Proportional => "p",
            PathwayKind::Integral => "i",
            PathwayKind::Derivative => "d",
        }
    }

    pub fn from_prefix(prefix: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.prefix() == prefix)
    }

    /// Sign with which readout pair `pair` enters the pathway output.
    /// The derivative subtracts the slow pair from the fast one.
    pub(crate) fn pair_sign(self, pair: usize) -> f64 {
        if self == PathwayKind::Derivative && pair == 1 {
            -1.0
        } else {
            1.0
        }
    }

    pub(crate) fn slot_side(slot: usize) -> Side {
        if slot % 2 == 0 {
            Side::Positive
        } else {
            Side::Negative
        }
    }
}

impl fmt::Display for PathwayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PathwayKind::Proportional => "proportional",
            PathwayKind::Integral => "integral",
            PathwayKind::Derivative => "derivative",
        };
        f.write_str(name)
    }
}

/// Role of a trainable parameter array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    TauSyn,
    TauMem,
    WIn,
    WOut,
    ThetaAdd,
    Alpha,
    Beta,
    ReadoutDecay,
    Gain,
}

impl Role {
    pub const ALL: [Role; 9] = [
        Role::TauSyn,
        Role::TauMem,
        Role::WIn,
        Role::WOut,
        Role::ThetaAdd,
        Role::Alpha,
        Role::Beta,
        Role::ReadoutDecay,
        Role::Gain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Role::TauSyn => "tau_syn",
            Role::TauMem => "tau_mem",
            Role::WIn => "w_in",
            Role::WOut => "w_out",
            Role::ThetaAdd => "theta_add",
            Role::Alpha => "alpha",
            Role::Beta => "beta",
            Role::ReadoutDecay => "readout_decay",
            Role::Gain => "gain",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == name)
    }

    /// Feasible interval of the role for a pathway with base threshold `threshold`.
    pub fn range(self, threshold: f64) -> (f64, f64) {
        match self {
            Role::TauSyn | Role::TauMem | Role::ReadoutDecay => (0.0, 1.0),
            Role::WIn | Role::WOut | Role::Gain => (0.0, f64::INFINITY),
            Role::ThetaAdd => (0.0, threshold),
            Role::Alpha => (-1.0, 1.0),
            Role::Beta => (MIN_BETA, f64::INFINITY),
        }
    }
}

/// Smallest admissible encoder gain.
pub const MIN_BETA: f64 = 1e-3;

/// All parameters of one pathway.
///
/// Per-neuron arrays are laid out group-major: for proportional and integral
/// pathways `[pos, neg]` per group, for the derivative
/// `[fast pos, fast neg, slow pos, slow neg]`. Per-weight arrays hold one
/// entry per sub-group (`[fast, slow]` for the derivative); the positive and
/// negative neurons share it, which keeps the pathway symmetric.
///
/// The same type doubles as gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct PathwayParams {
    pub kind: PathwayKind,
    pub groups: usize,
    /// Base firing threshold of every neuron.
    pub threshold: f64,
    pub refractory_steps: u32,
    /// Self-recurrent weight; only used by the recurrent-integrator baseline.
    pub recurrent_weight: f64,
    /// Relaxation of the adaptive threshold towards its base value.
    pub theta_decay: f64,

    pub tau_syn: Vec<f64>,
    pub tau_mem: Vec<f64>,
    pub w_in: Vec<f64>,
    pub w_out: Vec<f64>,
    pub theta_add: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub readout_decay: Vec<f64>,
    pub gain: Vec<f64>,
}

impl PathwayParams {
    /// Parameters filled with a uniform generic initialization.
    pub fn uniform(kind: PathwayKind, groups: usize) -> Self {
        let neurons = groups * kind.neurons_per_group();
        let weights = groups * kind.weights_per_group();
        let mut p = Self {
            kind,
            groups,
            threshold: 1.0,
            refractory_steps: 0,
            recurrent_weight: 0.0,
            theta_decay: 0.0,
            tau_syn: vec![0.5; neurons],
            tau_mem: vec![1.0; neurons],
            w_in: vec![0.5; weights],
            w_out: vec![1.0 / groups.max(1) as f64; weights],
            theta_add: Vec::new(),
            alpha: vec![0.0; groups],
            beta: vec![1.0; groups],
            readout_decay: vec![0.9; kind.readout_pairs()],
            gain: vec![1.0],
        };
        match kind {
            PathwayKind::Integral => {
                p.alpha.fill(0.5);
                // base drive of 2 * alpha * w_in / (1 - tau_syn) = 0.25 per step
                p.w_in.fill(0.125);
                p.theta_add = vec![0.01; groups];
                p.readout_decay.fill(0.95);
            }
            PathwayKind::Derivative => {
                for g in 0..groups {
                    for slot in 0..4 {
                        let n = g * 4 + slot;
                        p.tau_syn[n] = if slot < 2 { 0.4 } else { 0.9 };
                    }
                    // unit charge per input spike on both sub-groups
                    p.w_in[g * 2] = 0.6;
                    p.w_in[g * 2 + 1] = 0.1;
                }
                p.readout_decay = vec![0.8, 0.8];
            }
            PathwayKind::Proportional => {}
        }
        p
    }

    /// A zeroed copy with the same layout, used for gradients.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, values) in z.arrays_mut() {
            values.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    pub fn neurons(&self) -> usize {
        self.groups * self.kind.neurons_per_group()
    }

    /// The trainable arrays in canonical order. Empty arrays (e.g. `theta_add`
    /// outside the integral pathway) are included.
    pub fn arrays(&self) -> [(Role, &Vec<f64>); 9] {
        [
            (Role::TauSyn, &self.tau_syn),
            (Role::TauMem, &self.tau_mem),
            (Role::WIn, &self.w_in),
            (Role::WOut, &self.w_out),
            (Role::ThetaAdd, &self.theta_add),
            (Role::Alpha, &self.alpha),
            (Role::Beta, &self.beta),
            (Role::ReadoutDecay, &self.readout_decay),
            (Role::Gain, &self.gain),
        ]
    }

    pub fn arrays_mut(&mut self) -> [(Role, &mut Vec<f64>); 9] {
        [
            (Role::TauSyn, &mut self.tau_syn),
            (Role::TauMem, &mut self.tau_mem),
            (Role::WIn, &mut self.w_in),
            (Role::WOut, &mut self.w_out),
            (Role::ThetaAdd, &mut self.theta_add),
            (Role::Alpha, &mut self.alpha),
            (Role::Beta, &mut self.beta),
            (Role::ReadoutDecay, &mut self.readout_decay),
            (Role::Gain, &mut self.gain),
        ]
    }

    pub fn array(&self, role: Role) -> &[f64] {
        self.arrays()
            .into_iter()
            .find(|(r, _)| *r == role)
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn array_mut(&mut self, role: Role) -> &mut Vec<f64> {
        self.arrays_mut()
            .into_iter()
            .find(|(r, _)| *r == role)
            .map(|(_, v)| v)
            .expect("every role has an array")
    }

    /// Expected length of the array for `role`.
    pub fn expected_len(&self, role: Role) -> usize {
        match role {
            Role::TauSyn | Role::TauMem => self.neurons(),
            Role::WIn | Role::WOut => self.groups * self.kind.weights_per_group(),
            Role::ThetaAdd => {
                if self.kind == PathwayKind::Integral {
                    self.groups
                } else {
                    0
                }
            }
            Role::Alpha | Role::Beta => self.groups,
            Role::ReadoutDecay => self.kind.readout_pairs(),
            Role::Gain => 1,
        }
    }

    /// Whether every array has the length its layout requires.
    pub fn layout_ok(&self) -> bool {
        Role::ALL
            .into_iter()
            .all(|r| self.array(r).len() == self.expected_len(r))
    }

    /// Project every parameter onto its feasible interval.
    pub fn clamp_to_ranges(&mut self) {
        let threshold = self.threshold;
        for (role, values) in self.arrays_mut() {
            let (lo, hi) = role.range(threshold);
            for v in values.iter_mut() {
                *v = v.clamp(lo, hi);
            }
        }
    }

    /// Give the negative neuron of every pair the parameters of its positive twin.
    pub fn tie_pairs(&mut self) {
        for arr in [&mut self.tau_syn, &mut self.tau_mem] {
            for pair in arr.chunks_mut(2) {
                pair[1] = pair[0];
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.arrays()
            .iter()
            .all(|(_, v)| v.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other` over every trainable array.
    pub fn add_scaled(&mut self, other: &PathwayParams, scale: f64) {
        for ((_, a), (_, b)) in self.arrays_mut().into_iter().zip(other.arrays()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += scale * y;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_counts_for_forty_groups() {
        let p = PathwayParams::uniform(PathwayKind::Proportional, 40);
        assert_eq!((p.tau_syn.len(), p.tau_mem.len()), (80, 80));
        assert_eq!((p.w_in.len(), p.w_out.len()), (40, 40));
        let i = PathwayParams::uniform(PathwayKind::Integral, 40);
        assert_eq!((i.tau_syn.len(), i.w_in.len(), i.theta_add.len()), (80, 40, 40));
        let d = PathwayParams::uniform(PathwayKind::Derivative, 40);
        assert_eq!((d.tau_syn.len(), d.tau_mem.len()), (160, 160));
        assert_eq!((d.w_in.len(), d.w_out.len()), (80, 80));
        for p in [p, i, d] {
            assert!(p.layout_ok());
        }
    }

    #[test]
    fn clamp_projects_into_ranges() {
        let mut p = PathwayParams::uniform(PathwayKind::Integral, 2);
        p.tau_syn[0] = 1.3;
        p.w_in[1] = -0.2;
        p.theta_add[0] = 5.0;
        p.beta[0] = -1.0;
        p.clamp_to_ranges();
        assert_eq!(p.tau_syn[0], 1.0);
        assert_eq!(p.w_in[1], 0.0);
        assert_eq!(p.theta_add[0], p.threshold);
        assert_eq!(p.beta[0], MIN_BETA);
    }

    #[test]
    fn role_names_round_trip() {
        for r in Role::ALL {
            assert_eq!(Role::from_name(r.name()), Some(r));
        }
        for k in PathwayKind::ALL {
            assert_eq!(PathwayKind::from_prefix(k.prefix()), Some(k));
        }
    }
}
