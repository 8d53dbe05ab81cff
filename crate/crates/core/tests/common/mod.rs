#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

use jcm_core::algebra::FockSpace;
use jcm_core::aux::{solve_aux, AuxOptions, AuxState};
use jcm_core::params::{ModelParams, TimeProfile};
use jcm_core::propagator::{BlockModel, ExactSolution};

pub const T_FINAL: f64 = 20.0;

pub struct Scenario {
    pub name: &'static str,
    pub params: ModelParams,
    pub initial: AuxState,
}

fn with_omega0(omega0: TimeProfile) -> ModelParams {
    ModelParams::new(
        TimeProfile::constant(1.0),
        omega0,
        TimeProfile::constant(0.1),
        TimeProfile::constant(0.0),
        3,
    )
}

/// The three reference scenarios at k = 3, ω = 1, real g = 0.1.
pub fn scenarios() -> Vec<Scenario> {
    vec![
        Scenario {
            name: "constant-resonant",
            params: with_omega0(TimeProfile::constant(3.0)),
            initial: AuxState::new(FRAC_PI_3, PI),
        },
        Scenario {
            name: "detuned-constant",
            params: with_omega0(TimeProfile::constant(2.8)),
            initial: AuxState::new(FRAC_PI_2, PI),
        },
        Scenario {
            name: "sinusoidal-omega0",
            params: with_omega0(TimeProfile::sinusoid(3.0, 0.1, 0.5, 0.0)),
            initial: AuxState::new(FRAC_PI_2, PI),
        },
    ]
}

pub fn space32() -> FockSpace {
    FockSpace::new(32, 3, 3).unwrap()
}

pub fn solve(space: FockSpace, scenario: &Scenario, m: usize, opts: &AuxOptions) -> ExactSolution {
    let model = BlockModel::for_m(space, m).unwrap();
    let traj = solve_aux(
        scenario.initial,
        (0.0, T_FINAL),
        &scenario.params,
        model.block.lambda(),
        opts,
    )
    .unwrap_or_else(|e| panic!("{} m = {m}: {e}", scenario.name));
    ExactSolution::new(model, scenario.params.clone(), traj).unwrap()
}
