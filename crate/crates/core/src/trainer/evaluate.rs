use crate::agents::{PolicySpec, PortfolioVectorMemory, PVM_TAIL};
use crate::backtest::{run_backtest, BacktestResult, CostModel, Strategy};
use crate::market::HistoryView;
use crate::Result;

/// A trained policy acting in evaluation mode, feeding its own outputs back through a PVM.
pub struct PolicyStrategy {
    name: String,
    spec: PolicySpec<f64>,
    pvm: PortfolioVectorMemory<f64>,
}

impl PolicyStrategy {
    /// Starts with a fresh, uniform PVM.
    pub fn new(name: impl Into<String>, spec: PolicySpec<f64>) -> Self {
        let pvm = PortfolioVectorMemory::new(spec.n_assets(), PVM_TAIL);
        Self { name: name.into(), spec, pvm }
    }

    pub fn pvm(&self) -> &PortfolioVectorMemory<f64> {
        &self.pvm
    }
}

impl Strategy for PolicyStrategy {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn decide(&mut self, view: &HistoryView<'_>, _prev_rolled: &[f64]) -> Result<Vec<f64>> {
        let state = view.price_tensor(self.spec.window())?;
        let w = self.spec.forward(&state, &self.pvm.read(view.now()), None)?;
        self.pvm.write(view.now(), w.clone())?;
        Ok(w.into_inner())
    }
}

/// Backtests `spec` on `series` with a PVM re-initialized to uniform.
pub fn evaluate(spec: &PolicySpec<f64>, series: &crate::PriceSeries, cost: CostModel) -> Result<BacktestResult> {
    let mut strategy = PolicyStrategy::new(spec.kind().name(), spec.clone());
    run_backtest(&mut strategy, series, cost, spec.window())
}
