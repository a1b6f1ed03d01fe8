use super::EffectsError;
use crate::numerics::Rng;
use crate::scm::Scm;

/// Draws of a scalar outcome given a conditioning vector.
pub trait ConditionalSampler {
    fn cond_dim(&self) -> usize;

    fn sample(&self, cond: &[f64], m: usize, rng: &mut Rng) -> Result<Vec<f64>, EffectsError>;
}

impl<S: ConditionalSampler + ?Sized> ConditionalSampler for &S {
    fn cond_dim(&self) -> usize {
        (**self).cond_dim()
    }

    fn sample(&self, cond: &[f64], m: usize, rng: &mut Rng) -> Result<Vec<f64>, EffectsError> {
        (**self).sample(cond, m, rng)
    }
}

/// Oracle generator backed by a known SCM: each conditioning entry either
/// clamps a node or is ignored, and the target node is simulated.
///
/// This samples `P(target | do(clamped))`, which equals the observational
/// conditional whenever the clamped set contains every ancestor path into
/// the target that carries confounding (e.g. all parents, or all nodes
/// preceding it in a topological order with no hidden nodes).
#[derive(Debug, Clone)]
pub struct ScmSampler {
    scm: Scm,
    target: usize,
    cond_map: Vec<Option<usize>>,
}

impl ScmSampler {
    pub fn new(scm: Scm, target: usize, cond_map: Vec<Option<usize>>) -> Result<Self, EffectsError> {
        let n = scm.num_nodes();
        if target >= n || cond_map.iter().flatten().any(|&v| v >= n || v == target) {
            return Err(EffectsError::InvalidArgument("conditioning map refers to an invalid node".into()));
        }
        Ok(Self { scm, target, cond_map })
    }
}

impl ConditionalSampler for ScmSampler {
    fn cond_dim(&self) -> usize {
        self.cond_map.len()
    }

    fn sample(&self, cond: &[f64], m: usize, rng: &mut Rng) -> Result<Vec<f64>, EffectsError> {
        check_len(cond, self.cond_dim())?;
        let clamp: Vec<(usize, f64)> = self
            .cond_map
            .iter()
            .zip(cond)
            .filter_map(|(v, &c)| v.map(|v| (v, c)))
            .collect();
        let sim = self
            .scm
            .simulate_with(m, &clamp, rng)
            .map_err(|e| EffectsError::Sampler(e.to_string()))?;
        Ok(sim.column(self.target))
    }
}

/// Adds `shift` to every draw whose conditioning entry `index` equals 1.
/// Used to build deliberately miscalibrated generators for one treatment arm.
#[derive(Debug, Clone)]
pub struct ArmShift<S> {
    pub inner: S,
    pub index: usize,
    pub shift: f64,
}

impl<S: ConditionalSampler> ConditionalSampler for ArmShift<S> {
    fn cond_dim(&self) -> usize {
        self.inner.cond_dim()
    }

    fn sample(&self, cond: &[f64], m: usize, rng: &mut Rng) -> Result<Vec<f64>, EffectsError> {
        let mut draws = self.inner.sample(cond, m, rng)?;
        if cond.get(self.index) == Some(&1.0) {
            draws.iter_mut().for_each(|v| *v += self.shift);
        }
        Ok(draws)
    }
}

pub(crate) fn check_len(cond: &[f64], dim: usize) -> Result<(), EffectsError> {
    if cond.len() != dim {
        return Err(EffectsError::InvalidArgument(format!(
            "conditioning vector has {} entries, sampler expects {dim}",
            cond.len()
        )));
    }
    Ok(())
}
