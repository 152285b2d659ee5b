use mpclab::examples::preset;
use mpclab::ftocp::FtocpSpec;
use mpclab::kkt::{assemble, block_inverse_profile, closed_form_decay, closed_form_general_decay, tracking_sensitivity, DecayFit, DecayInputs};
use mpclab::mpc::{run_mpc, solve_opt, TerminalRule};
use mpclab::param::{NoiseSchedule, ParamSeq, PredictionStream};
use nalgebra::DVector;
use proptest::prelude::*;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prediction_power_is_quadratic_in_scale(
        values in prop::collection::vec(0.0..2.0f64, 1..8),
        scale in 0.0..3.0f64,
        horizon in 2usize..20,
    ) {
        let schedule = NoiseSchedule::PerOffset { values };
        let scaled = schedule.scaled(scale);
        for offset in 0..=horizon {
            let base = schedule.power(offset, horizon);
            prop_assert!(rel_close(scaled.power(offset, horizon), scale * scale * base, 1e-12));
        }
    }

    #[test]
    fn zero_schedule_reproduces_truth(
        raw in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 2), 3..12),
        seed in any::<u64>(),
    ) {
        let truth = ParamSeq::new(raw.into_iter().map(DVector::from_vec).collect()).unwrap();
        let horizon = truth.horizon();
        let stream = PredictionStream::new(truth.clone(), NoiseSchedule::Zero, seed).unwrap();
        for t in 0..=horizon {
            for offset in 0..=horizon - t {
                prop_assert_eq!(stream.prediction(t, offset), truth.get(t + offset).clone());
            }
        }
    }

    #[test]
    fn permuted_kkt_unpermutes_exactly(seed in 0u64..64, start in 0usize..6, hat in any::<bool>()) {
        let inst = preset("tracking-rand", Some(8), seed).unwrap();
        let family = inst.system.family().unwrap();
        let terminal = if hat {
            mpclab::system::TerminalCost::Indicator { target: DVector::zeros(2) }
        } else {
            inst.true_terminal()
        };
        let spec = FtocpSpec::new(start, 8, inst.initial_state.clone(), inst.truth.window(start, 8), terminal).unwrap();
        let assembly = assemble(family.as_ref(), &spec).unwrap();
        prop_assert_eq!(assembly.unpermute(), assembly.h.clone());
    }

    #[test]
    fn inverse_kkt_is_symmetric(seed in 0u64..64) {
        let inst = preset("tracking-rand", Some(10), seed).unwrap();
        let family = inst.system.family().unwrap();
        let spec = FtocpSpec::new(0, 10, inst.initial_state.clone(), inst.truth.window(0, 10), inst.true_terminal()).unwrap();
        let profile = block_inverse_profile(&assemble(family.as_ref(), &spec).unwrap()).unwrap();
        prop_assert!(profile.symmetry_error < 1e-10);
        prop_assert!(profile.fit.dominates(&profile.per_offset));
    }

    #[test]
    fn decay_constants_are_scale_free(lower in 0.1..5.0f64, ratio in 1.0..10.0f64, scale in 0.1..10.0f64) {
        let upper = lower * ratio;
        let base = closed_form_general_decay(lower, upper, upper).unwrap();
        let scaled = closed_form_general_decay(scale * lower, scale * upper, scale * upper).unwrap();
        prop_assert!(rel_close(base.h3, scaled.h3, 1e-12));
        prop_assert!(rel_close(base.lambda3, scaled.lambda3, 1e-12));
    }

    #[test]
    fn tracking_h2_is_affine_in_radius(seed in 0u64..32, radius in 0.0..10.0f64) {
        let inst = preset("tracking-rand", Some(6), seed).unwrap();
        let c = inst.system.family().unwrap().constants().clone();
        let decay = closed_form_decay(&DecayInputs::from_declared(&c, 0.5)).unwrap();
        let at = |r: f64| tracking_sensitivity(&decay, &c, r, 1.0);
        prop_assert!(rel_close(at(2.0 * radius) - at(radius), at(radius) - at(0.0), 1e-9));
        prop_assert!(at(radius) >= at(0.0));
    }

    #[test]
    fn decay_fit_dominates_its_profile(profile in prop::collection::vec(0.0..10.0f64, 1..12)) {
        let fit = DecayFit::fit(&profile);
        prop_assert!(fit.dominates(&profile));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // one step cannot reach the origin with a single input, so k starts at the controllability index
    #[test]
    fn closed_loop_runs_are_consistent(k in 2usize..10, rho in 0.0..0.5f64, seed in 0u64..1000) {
        let inst = preset("disturbance", Some(16), 1).unwrap();
        let schedule = NoiseSchedule::Constant { rho };
        let stream = PredictionStream::new(inst.truth.clone(), schedule, seed).unwrap();
        let run = run_mpc(&inst, &stream, k, TerminalRule::ZeroState).unwrap();
        let again = run_mpc(&inst, &stream, k, TerminalRule::ZeroState).unwrap();
        prop_assert_eq!(&run, &again);
        prop_assert!(run.dynamics_residual(&inst) < 1e-10);
        let opt = solve_opt(&inst).unwrap();
        prop_assert!(run.total_cost - opt.total_cost >= -1e-7);
    }
}
