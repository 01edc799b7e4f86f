//! An epigraph program together with the encoded feasible set of `X`.

use nalgebra::DMatrix;

use crate::constraints::{encode_into, verify, ConstraintSet, EncodedFeasibility, VerifyReport};
use crate::error::Result;
use crate::matcore::SymMatrix;
use crate::reformulate::{build, EpigraphProgram, LinearMapSpec, NormKind};
use crate::sdp::{solve, SdpProblem, SdpSolution, SolverSettings};

#[derive(Debug, Clone)]
pub struct Formulation {
    pub program: EpigraphProgram,
    pub constraints: ConstraintSet,
    pub encoded: EncodedFeasibility,
}

impl Formulation {
    pub fn new(spec: &LinearMapSpec, norm: NormKind, constraints: ConstraintSet) -> Result<Self> {
        let mut program = build(spec, norm)?;
        let x = program.x;
        let encoded = encode_into(&constraints, &mut program.sdp, &x)?;
        Ok(Self {
            program,
            constraints,
            encoded,
        })
    }

    /// The relaxation: everything except the rank target.
    pub fn sdp(&self) -> &SdpProblem {
        &self.program.sdp
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.program.x.m, self.program.x.n)
    }

    pub fn rank_target(&self) -> Option<usize> {
        self.encoded.rank_target
    }

    /// Objective value of `X` (squared norm for Frobenius).
    pub fn objective_of(&self, x: &DMatrix<f64>) -> Result<f64> {
        self.program.objective_of(x)
    }

    pub fn norm_of(&self, x: &DMatrix<f64>) -> Result<f64> {
        self.program.norm_of(x)
    }

    pub fn extract_x(&self, sol: &SdpSolution) -> DMatrix<f64> {
        self.program.x.extract(sol)
    }

    pub fn v_matrix(&self, sol: &SdpSolution) -> Option<SymMatrix> {
        self.encoded.v_block.map(|v| v.matrix(sol))
    }

    pub fn verify(&self, x: &DMatrix<f64>) -> VerifyReport {
        verify(&self.constraints, x)
    }

    pub fn solve_relaxation(&self, settings: &SolverSettings) -> Result<SdpSolution> {
        solve(self.sdp(), settings)
    }
}
