use crate::agents::{PolicySpec, PortfolioVectorMemory};
use crate::backtest::roll_weights;
use crate::market::{build_price_tensor, price_relatives, PriceSeries};
use crate::numerics::{Graph, NodeId, Tensor};
use crate::Result;

/// The differentiable batch objective
/// `J = (1/B)·Σ_t log[(w_t·y_{t+1}) − μ_c·Σ|w_t − roll(pvm[t−1], y_t)|]`.
///
/// PVM entries and relatives enter as constants; only the policy parameters are graph
/// parameters, so `graph.backward()` yields `∇_θ J`.
pub struct BatchObjective {
    pub graph: Graph<f64>,
    /// Policy output per batch index.
    pub weights: Vec<NodeId>,
    /// Cost-adjusted gross return per batch index.
    pub brackets: Vec<NodeId>,
    /// `None` when some bracket is non-positive and the logarithm is undefined.
    pub objective: Option<NodeId>,
}

impl BatchObjective {
    pub fn value(&self) -> Option<f64> {
        self.objective.map(|id| self.graph.value(id).item())
    }

    pub fn weight_values(&self) -> Vec<Vec<f64>> {
        self.weights.iter().map(|&id| self.graph.value(id).data().to_vec()).collect()
    }

    /// First batch position whose bracket is non-positive.
    pub fn first_ruin(&self) -> Option<(usize, f64)> {
        self.brackets.iter().enumerate().map(|(k, &id)| (k, self.graph.value(id).item())).find(|&(_, b)| !(b > 0.0))
    }
}

/// Builds the objective for `batch`. Batch position `k` uses dropout seed `seed + k` in
/// training mode.
pub fn build_batch_objective(
    spec: &PolicySpec<f64>,
    series: &PriceSeries,
    batch: &[usize],
    pvm: &PortfolioVectorMemory<f64>,
    cost_rate: f64,
    dropout_seed: Option<u64>,
) -> Result<BatchObjective> {
    let mut g = Graph::new();
    let nodes = spec.register(&mut g)?;
    let mut weights = Vec::with_capacity(batch.len());
    let mut brackets = Vec::with_capacity(batch.len());
    for (k, &t) in batch.iter().enumerate() {
        let state = build_price_tensor(series, t, spec.window())?;
        let tail = pvm.read(t);
        let w = spec.build(&mut g, &nodes, &state, &tail, dropout_seed.map(|s| s.wrapping_add(k as u64)))?;
        let y_next = price_relatives(series, t + 1, false)?;
        let y_now = price_relatives(series, t, false)?;
        let held = roll_weights(pvm.get(t - 1), &y_now)?;

        let y = g.constant(Tensor::vector(y_next.as_slice().to_vec()));
        let held = g.constant(Tensor::vector(held));
        let growth = g.mul(w, y)?;
        let gross = g.sum(growth)?;
        let delta = g.sub(w, held)?;
        let delta = g.abs(delta)?;
        let turnover = g.sum(delta)?;
        let charge = g.scale(turnover, cost_rate)?;
        brackets.push(g.sub(gross, charge)?);
        weights.push(w);
    }
    let mut out = BatchObjective { graph: g, weights, brackets, objective: None };
    if out.first_ruin().is_some() {
        return Ok(out);
    }
    let g = &mut out.graph;
    let mut total: Option<NodeId> = None;
    for &b in &out.brackets {
        let l = g.log(b)?;
        total = Some(match total {
            Some(acc) => g.add(acc, l)?,
            None => l,
        });
    }
    let j = g.scale(total.expect("batch is non-empty"), 1.0 / batch.len() as f64)?;
    g.set_output(j);
    out.objective = Some(j);
    Ok(out)
}
