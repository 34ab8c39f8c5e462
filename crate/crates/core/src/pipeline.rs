use std::sync::Arc;

use crate::discretize::{assemble_operator, FracOperator, Grid, GridSpec};
use crate::dtn::{dtn_matrix, dtn_matrix_exterior, response_difference, DtnMatrix};
use crate::error::Result;
use crate::forward::{assemble_system, Potential, SolutionOperator, SystemMatrix};
use crate::par::Schedule;

/// A grid with its assembled fractional operator; the entry point for
/// everything that depends on a potential.
#[derive(Clone, Debug)]
pub struct Model {
    grid: Arc<Grid>,
    operator: Arc<FracOperator>,
    schedule: Schedule,
}

impl Model {
    pub fn new(spec: GridSpec) -> Result<Self> {
        Self::with_schedule(spec, Schedule::default())
    }

    pub fn with_schedule(spec: GridSpec, schedule: Schedule) -> Result<Self> {
        let grid = Arc::new(Grid::new(spec)?);
        let operator = Arc::new(assemble_operator(grid.clone(), schedule)?);
        Ok(Model { grid, operator, schedule })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn operator(&self) -> &Arc<FracOperator> {
        &self.operator
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    pub fn n_interior(&self) -> usize {
        self.grid.interior().len()
    }

    pub fn n_measurement(&self) -> usize {
        self.grid.measurement().len()
    }

    pub fn constant(&self, value: f64) -> Result<Potential> {
        Potential::constant(self.n_interior(), value)
    }

    pub fn potential(&self, values: Vec<f64>) -> Result<Potential> {
        Potential::new(values)
    }

    pub fn system(&self, q: &Potential) -> Result<SystemMatrix> {
        assemble_system(&self.operator, q)
    }

    pub fn dtn(&self, q: &Potential) -> Result<DtnMatrix> {
        dtn_matrix(&self.system(q)?)
    }

    pub fn dtn_exterior(&self, q: &Potential) -> Result<DtnMatrix> {
        dtn_matrix_exterior(&self.system(q)?)
    }

    pub fn solution_operator(&self, q: &Potential) -> Result<SolutionOperator> {
        Ok(self.system(q)?.solution_operator())
    }

    /// `Λ(q1) − Λ(q0)` via the exact response identity.
    pub fn dtn_change(&self, q0: &Potential, q1: &Potential) -> Result<DtnMatrix> {
        let s0 = self.solution_operator(q0)?;
        let s1 = self.solution_operator(q1)?;
        let dq: Vec<f64> = q1.values().iter().zip(q0.values()).map(|(a, b)| a - b).collect();
        response_difference(&s0, &s1, &dq)
    }
}
