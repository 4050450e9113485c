mod common;

use common::step_strategy;
use proptest::prelude::*;
use vexl::divergence::{make_fn, ThetaConfig};
use vexl::ons::{fourier_coefficients, lebesgue_constant, partial_sum_grid, star_maximal, TrigSystem, WalshSystem};
use vexl::{OrthonormalSystem, StepFunction, SystemKind};

fn systems() -> Vec<Box<dyn OrthonormalSystem<f64>>> {
    vec![SystemKind::Trig.system(), SystemKind::Walsh.system()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficients_are_linear(f in step_strategy(10, 4.0), g in step_strategy(10, 4.0), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        for sys in systems() {
            let h = f.scale(a).unwrap().add(&g.scale(b).unwrap());
            let (cf, cg, ch) = (
                fourier_coefficients(&f, sys.as_ref(), 64).unwrap(),
                fourier_coefficients(&g, sys.as_ref(), 64).unwrap(),
                fourier_coefficients(&h, sys.as_ref(), 64).unwrap(),
            );
            for n in 0..64 {
                prop_assert!((ch[n] - (a * cf[n] + b * cg[n])).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn bessel(f in step_strategy(16, 5.0)) {
        let l2 = f.mul(&f).integrate().unwrap();
        for sys in systems() {
            let c = fourier_coefficients(&f, sys.as_ref(), 512).unwrap();
            prop_assert!(c.iter().map(|v| v * v).sum::<f64>() <= l2 + 1e-8);
        }
    }

    #[test]
    fn uniform_bound(n in 1usize..16384, t in 0.0f64..1.0) {
        for sys in systems() {
            prop_assert!(sys.eval(n, t).abs() <= sys.bound() + 1e-12);
        }
    }

    #[test]
    fn star_grows_with_horizon(f in step_strategy(8, 3.0), m in 1usize..48, extra in 0usize..48) {
        for sys in systems() {
            let c = fourier_coefficients(&f, sys.as_ref(), m + extra).unwrap();
            let short = star_maximal(&c, sys.as_ref(), m, 128).unwrap();
            let long = star_maximal(&c, sys.as_ref(), m + extra, 128).unwrap();
            let last = partial_sum_grid(&c, sys.as_ref(), m + extra, 128).unwrap();
            for j in 0..128 {
                prop_assert!(short.samples()[j] <= long.samples()[j]);
                prop_assert!(last.samples()[j].abs() <= long.samples()[j] + 1e-15);
            }
        }
    }
}

#[test]
fn grid_bound_over_all_default_modes() {
    for sys in systems() {
        let mut buf = vec![0.0; 1 << 14];
        for j in 0..256 {
            sys.eval_prefix((j as f64 + 0.5) / 256.0, &mut buf);
            assert!(buf.iter().all(|v| v.abs() <= sys.bound() + 1e-12), "{}", sys.name());
        }
    }
}

#[test]
fn trig_examples() {
    let s = TrigSystem;
    assert!((s.interval_integral(3, 0.0, 0.5) - 2f64.sqrt() / std::f64::consts::PI).abs() < 1e-15);
    let c: Vec<f64> = fourier_coefficients(&StepFunction::constant(1.0), &s, 16).unwrap();
    assert!((c[0] - 1.0).abs() < 1e-15 && c[1..].iter().all(|v| v.abs() < 1e-15));
    assert!(fourier_coefficients(&StepFunction::<f64>::zero(), &s, 16).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn walsh_examples() {
    let w = WalshSystem;
    assert_eq!(w.interval_integral(2, 0.0, 1.0), 0.0);
    let half = StepFunction::<f64>::indicator(0.0, 0.5);
    let c = fourier_coefficients(&half, &w, 2).unwrap();
    assert_eq!(c, vec![0.5, 0.5]);
}

#[test]
fn single_mode_is_reproduced() {
    let s = TrigSystem;
    let c: Vec<f64> = (1..=8).map(|n| if n == 3 { 1.0 } else { 0.0 }).collect();
    let grid = partial_sum_grid(&c, &s, 8, 64).unwrap();
    for j in 0..64 {
        let t = (j as f64 + 0.5) / 64.0;
        assert!((grid.samples()[j] - s.eval(3, t)).abs() <= 1e-10);
    }
    let star = star_maximal(&c, &s, 8, 64).unwrap();
    for j in 0..64 {
        assert!((star.samples()[j] - s.eval(3, (j as f64 + 0.5) / 64.0).abs()).abs() <= 1e-12);
    }
    assert!(partial_sum_grid(&c, &s, 0, 16).unwrap().samples().iter().all(|&v| v == 0.0));
    assert!(star_maximal(&[0.0; 8], &s, 8, 16).unwrap().samples().iter().all(|&v| v == 0.0));
}

#[test]
fn atom_coefficients_against_brute_force() {
    let cfg = ThetaConfig::new(vec![0.1234, 0.4321, 0.777], vec![0.01, 0.003, 0.02]).unwrap();
    let f = make_fn(&cfg).unwrap();
    let m = 1_000_000;
    for sys in systems() {
        let c = fourier_coefficients(&f, sys.as_ref(), 16).unwrap();
        for (n, cn) in c.iter().enumerate() {
            // cellwise Gauss–Legendre on a uniform M-point partition
            let brute = f
                .cells()
                .map(|cell| {
                    let v = cell.value.finite().unwrap();
                    if v == 0.0 {
                        return 0.0;
                    }
                    let pieces = (((cell.right - cell.left) * m as f64).ceil() as usize).max(1);
                    v * vexl::quad::composite(|t| sys.eval(n + 1, t), cell.left, cell.right, pieces)
                })
                .sum::<f64>();
            assert!((cn - brute).abs() <= 1e-6, "{} n = {}: {cn} vs {brute}", sys.name(), n + 1);
        }
    }
}

#[test]
fn lebesgue_constants() {
    let l1: f64 = lebesgue_constant(1).unwrap();
    assert!((l1 - (1.0 / 3.0 + 2.0 * 3f64.sqrt() / std::f64::consts::PI)).abs() < 1e-12);
    assert!(l1 > 1.0);
    let ls: Vec<f64> = (1..=64).map(|m| lebesgue_constant(m).unwrap()).collect();
    assert!(ls.windows(2).all(|w| w[1] > w[0]));
    // classical asymptotic (4/π²) ln m + 1.2703
    for m in [512usize, 4096] {
        let l: f64 = lebesgue_constant(m).unwrap();
        let approx = 4.0 / std::f64::consts::PI.powi(2) * (m as f64).ln() + 1.2703;
        assert!((l - approx).abs() < 1e-3, "m = {m}: {l} vs {approx}");
    }
}
