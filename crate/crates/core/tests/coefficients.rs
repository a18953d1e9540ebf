//! Integrator coefficients checked in exact rational arithmetic against
//! Taylor moment conditions.

use num_rational::Ratio;
use sdtm::integrators::{bdf_beta_lhs, bdf_weights, extrapolation_weights};

type Q = Ratio<i64>;

fn q(n: i64, d: i64) -> Q {
    Ratio::new(n, d)
}

fn pow(x: Q, m: u32) -> Q {
    (0..m).fold(q(1, 1), |acc, _| acc * x)
}

/// Σ a_i s_i^m = m β^{m-1} for m = 0..=k, nodes s_i = 1 - i.
fn derivative_moments_hold(a: &[Q], beta: Q) -> bool {
    let k = a.len() - 1;
    (0..=k as u32).all(|m| {
        let lhs: Q = a
            .iter()
            .enumerate()
            .map(|(i, &ai)| ai * pow(q(1 - i as i64, 1), m))
            .fold(q(0, 1), |x, y| x + y);
        let rhs = if m == 0 { q(0, 1) } else { q(m as i64, 1) * pow(beta, m - 1) };
        lhs == rhs
    })
}

#[test]
fn bdf_weights_exact() {
    assert_eq!(bdf_weights::<Q>(2).unwrap(), vec![q(3, 2), q(-2, 1), q(1, 2)]);
    assert_eq!(
        bdf_weights::<Q>(4).unwrap(),
        vec![q(25, 12), q(-4, 1), q(3, 1), q(-4, 3), q(1, 4)]
    );
    for k in 1..=6 {
        let a = bdf_weights::<Q>(k).unwrap();
        assert!(derivative_moments_hold(&a, q(1, 1)), "k={k}");
    }
}

#[test]
fn shifted_weights_exact() {
    assert_eq!(bdf_beta_lhs(2, q(2, 1)).unwrap(), vec![q(5, 2), q(-4, 1), q(3, 2)]);
    for k in [2, 4] {
        assert_eq!(bdf_beta_lhs(k, q(1, 1)).unwrap(), bdf_weights::<Q>(k).unwrap());
        for beta in [q(1, 1), q(3, 2), q(2, 1), q(7, 3)] {
            let a = bdf_beta_lhs(k, beta).unwrap();
            assert!(derivative_moments_hold(&a, beta), "k={k} beta={beta}");
        }
    }
    // closed form for k = 2
    for beta in [q(5, 4), q(2, 1), q(9, 2)] {
        let a = bdf_beta_lhs(2, beta).unwrap();
        assert_eq!(a[0], (q(2, 1) * beta + q(1, 1)) / q(2, 1));
        assert_eq!(a[1], -q(2, 1) * beta);
        assert_eq!(a[2], (q(2, 1) * beta - q(1, 1)) / q(2, 1));
    }
}

#[test]
fn extrapolation_weights_exact() {
    for k in [2, 4] {
        for beta in [q(1, 1), q(2, 1), q(5, 2)] {
            let c = extrapolation_weights(k, beta).unwrap();
            // reproduces polynomials of degree < k on nodes 0, -1, ...
            for m in 0..k as u32 {
                let lhs = c
                    .iter()
                    .enumerate()
                    .map(|(j, &cj)| cj * pow(q(-(j as i64), 1), m))
                    .fold(q(0, 1), |x, y| x + y);
                assert_eq!(lhs, pow(beta, m), "k={k} beta={beta} m={m}");
            }
        }
    }
    assert_eq!(
        extrapolation_weights(2, q(2, 1)).unwrap(),
        vec![q(3, 1), q(-2, 1)]
    );
}
