//! The spiking PID controller: parallel groups per pathway, shared readouts,
//! and a linear decode of every pathway.

mod checkpoint;
mod params;
mod pathway;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use params::{PathwayKind, PathwayParams, Role, MIN_BETA};
pub use pathway::{stream_base, ForwardMode, Pathway, PathwayState, RECURRENT_STREAM_BASE};

pub(crate) use pathway::{advance, Tape};

/// Number of groups per pathway.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkSize {
    pub p: usize,
    pub i: usize,
    pub d: usize,
}

impl NetworkSize {
    pub fn uniform(groups: usize) -> Self {
        Self {
            p: groups,
            i: groups,
            d: groups,
        }
    }

    pub fn groups(&self, kind: PathwayKind) -> usize {
        match kind {
            PathwayKind::Proportional => self.p,
            PathwayKind::Integral => self.i,
            PathwayKind::Derivative => self.d,
        }
    }

    /// Two neurons per P and I group, four per D group.
    pub fn neuron_count(&self) -> usize {
        2 * self.p + 2 * self.i + 4 * self.d
    }
}

impl Default for NetworkSize {
    fn default() -> Self {
        Self::uniform(40)
    }
}

/// Per-term outputs of one controller step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ControllerOutput {
    pub p_term: f64,
    pub i_term: f64,
    pub d_term: f64,
    pub total: f64,
}

impl ControllerOutput {
    pub fn new(p_term: f64, i_term: f64, d_term: f64) -> Self {
        Self {
            p_term,
            i_term,
            d_term,
            total: p_term + i_term + d_term,
        }
    }
}

/// The assembled controller for one axis.
#[derive(Debug, Clone)]
pub struct PidNetwork {
    pub p: Pathway,
    pub i: Pathway,
    pub d: Pathway,
    seed: u64,
}

impl PidNetwork {
    /// Network with the generic default initialization.
    pub fn new(size: NetworkSize, seed: u64) -> Self {
        Self::from_params(
            PathwayParams::uniform(PathwayKind::Proportional, size.p),
            PathwayParams::uniform(PathwayKind::Integral, size.i),
            PathwayParams::uniform(PathwayKind::Derivative, size.d),
            seed,
        )
    }

    pub fn from_params(p: PathwayParams, i: PathwayParams, d: PathwayParams, seed: u64) -> Self {
        Self {
            p: Pathway::new(p, seed),
            i: Pathway::new(i, seed),
            d: Pathway::new(d, seed),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn size(&self) -> NetworkSize {
        NetworkSize {
            p: self.p.params.groups,
            i: self.i.params.groups,
            d: self.d.params.groups,
        }
    }

    pub fn neuron_count(&self) -> usize {
        self.size().neuron_count()
    }

    pub fn pathway(&self, kind: PathwayKind) -> &Pathway {
        match kind {
            PathwayKind::Proportional => &self.p,
            PathwayKind::Integral => &self.i,
            PathwayKind::Derivative => &self.d,
        }
    }

    pub fn pathway_mut(&mut self, kind: PathwayKind) -> &mut Pathway {
        match kind {
            PathwayKind::Proportional => &mut self.p,
            PathwayKind::Integral => &mut self.i,
            PathwayKind::Derivative => &mut self.d,
        }
    }

    pub fn params(&self, kind: PathwayKind) -> &PathwayParams {
        &self.pathway(kind).params
    }

    pub fn params_mut(&mut self, kind: PathwayKind) -> &mut PathwayParams {
        &mut self.pathway_mut(kind).params
    }

    pub fn p_pathway_step(&mut self, error: f64) -> f64 {
        self.p.step(error)
    }

    pub fn i_pathway_step(&mut self, error: f64) -> f64 {
        self.i.step(error)
    }

    pub fn d_pathway_step(&mut self, error: f64) -> f64 {
        self.d.step(error)
    }

    /// One control tick: all three pathways see `setpoint - measurement`.
    pub fn controller_step(&mut self, setpoint: f64, measurement: f64) -> ControllerOutput {
        let error = setpoint - measurement;
        ControllerOutput::new(self.p.step(error), self.i.step(error), self.d.step(error))
    }

    /// Zero all state and restart every random stream from `seed`.
    pub fn reset(&mut self, seed: u64) {
        self.seed = seed;
        for kind in PathwayKind::ALL {
            self.pathway_mut(kind).reset(seed);
        }
    }

    /// Swap positive and negative draws on every group.
    pub fn mirror_streams(&mut self) {
        for kind in PathwayKind::ALL {
            self.pathway_mut(kind).mirror_streams();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forty_groups_is_320_neurons() {
        let net = PidNetwork::new(NetworkSize::default(), 0);
        assert_eq!(net.neuron_count(), 320);
        let counted: usize = PathwayKind::ALL.iter().map(|&k| net.pathway(k).neuron_count()).sum();
        assert_eq!(counted, 320);
    }

    #[test]
    fn reset_then_zero_input_is_zero_output() {
        let mut net = PidNetwork::new(NetworkSize::uniform(10), 4);
        // integral encoders fire at zero error, zero their offset for this check
        net.params_mut(PathwayKind::Integral).alpha.fill(0.0);
        for k in 0..50 {
            net.controller_step(1.0, (k as f64).cos());
        }
        net.reset(4);
        for _ in 0..50 {
            let out = net.controller_step(0.3, 0.3);
            assert_eq!(out, ControllerOutput::default());
        }
    }

    #[test]
    fn reset_is_idempotent_and_deterministic() {
        let mut a = PidNetwork::new(NetworkSize::uniform(5), 9);
        let run = |net: &mut PidNetwork| -> Vec<ControllerOutput> {
            (0..200)
                .map(|k| net.controller_step(0.5 * (k as f64 * 0.03).sin(), 0.0))
                .collect()
        };
        a.reset(1);
        a.reset(1);
        let first = run(&mut a);
        a.reset(1);
        assert_eq!(first, run(&mut a));
    }

    #[test]
    fn total_is_the_sum_of_terms() {
        let mut net = PidNetwork::new(NetworkSize::uniform(6), 2);
        for k in 0..500 {
            let out = net.controller_step((k as f64 * 0.01).sin(), 0.1);
            assert_eq!(out.total, out.p_term + out.i_term + out.d_term);
        }
    }

    #[test]
    fn first_step_terms_are_bounded_by_one_readout_increment() {
        let mut net = PidNetwork::new(NetworkSize::uniform(8), 2);
        let out = net.controller_step(10.0, -10.0);
        for kind in [PathwayKind::Integral, PathwayKind::Derivative] {
            let p = net.params(kind);
            let bound: f64 = p.gain[0] * p.w_out.iter().sum::<f64>();
            let term = if kind == PathwayKind::Integral { out.i_term } else { out.d_term };
            assert!(term.abs() <= bound + 1e-12);
        }
    }
}
