//! Hyperspherical coordinates on the unit sphere `S^m` in `R^{m+1}` with analytic
//! first and second derivatives.
//!
//! Angles `t_0, ..., t_{m-2}` range over `[0, pi]` and `t_{m-1}` over `[0, 2 pi]`:
//!
//! ```text
//! w_k = sin t_0 ... sin t_{k-1} cos t_k      (k < m)
//! w_m = sin t_0 ... sin t_{m-2} sin t_{m-1}
//! ```

#[derive(Clone, Copy, PartialEq)]
enum Factor {
    Sin,
    Cos,
}

impl Factor {
    /// `order`-th derivative of the factor evaluated from `(sin t, cos t)`.
    #[inline]
    fn eval(self, order: usize, s: f64, c: f64) -> f64 {
        match (self, order % 4) {
            (Factor::Sin, 0) => s,
            (Factor::Sin, 1) => c,
            (Factor::Sin, 2) => -s,
            (Factor::Sin, _) => -c,
            (Factor::Cos, 0) => c,
            (Factor::Cos, 1) => -s,
            (Factor::Cos, 2) => -c,
            (Factor::Cos, _) => s,
        }
    }
}

fn factor(m: usize, component: usize, angle: usize) -> Option<Factor> {
    if component < m {
        if angle < component {
            Some(Factor::Sin)
        } else if angle == component {
            Some(Factor::Cos)
        } else {
            None
        }
    } else {
        Some(Factor::Sin)
    }
}

/// Value, gradient and Hessian of the embedding `S^m -> R^{m+1}`.
pub(crate) struct SphereJet {
    pub value: Vec<f64>,
    /// `d1[a][k] = d w_k / d t_a`
    pub d1: Vec<Vec<f64>>,
    /// `d2[a * m + b][k] = d^2 w_k / d t_a d t_b`
    pub d2: Vec<Vec<f64>>,
}

pub(crate) fn embed(angles: &[f64]) -> Vec<f64> {
    let m = angles.len();
    let mut out = vec![0.0; m + 1];
    let mut prod = 1.0;
    for k in 0..m {
        out[k] = prod * angles[k].cos();
        prod *= angles[k].sin();
    }
    out[m] = prod;
    out
}

pub(crate) fn jet(angles: &[f64]) -> SphereJet {
    let m = angles.len();
    let sc: Vec<(f64, f64)> = angles.iter().map(|t| t.sin_cos()).collect();
    let product = |component: usize, orders: &[usize]| -> f64 {
        let mut p = 1.0;
        for (a, &order) in orders.iter().enumerate() {
            match factor(m, component, a) {
                Some(f) => p *= f.eval(order, sc[a].0, sc[a].1),
                None if order > 0 => return 0.0,
                None => {}
            }
        }
        p
    };
    let mut orders = vec![0usize; m];
    let value = (0..=m).map(|k| product(k, &orders)).collect();
    let mut d1 = Vec::with_capacity(m);
    for a in 0..m {
        orders[a] = 1;
        d1.push((0..=m).map(|k| product(k, &orders)).collect());
        orders[a] = 0;
    }
    let mut d2 = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            orders[a] += 1;
            orders[b] += 1;
            d2.push((0..=m).map(|k| product(k, &orders)).collect());
            orders[a] = 0;
            orders[b] = 0;
        }
    }
    SphereJet { value, d1, d2 }
}

/// Volume of the unit sphere `S^m`.
pub fn unit_sphere_volume(m: usize) -> f64 {
    use std::f64::consts::PI;
    // |S^0| = 2, |S^1| = 2 pi, |S^m| = 2 pi / (m - 1) |S^{m-2}|
    let mut even = 2.0;
    let mut odd = 2.0 * PI;
    if m == 0 {
        return even;
    }
    let mut k = 1;
    while k < m {
        k += 1;
        let next = 2.0 * PI / (k as f64 - 1.0);
        if k % 2 == 0 {
            even *= next;
        } else {
            odd *= next;
        }
    }
    if m % 2 == 0 {
        even
    } else {
        odd
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn embedding_is_unit_and_matches_jet() {
        let t = [0.4, 1.3, 2.2, 5.1];
        let w = embed(&t);
        assert_relative_eq!(w.iter().map(|v| v * v).sum::<f64>(), 1.0, epsilon = 1e-15);
        let j = jet(&t);
        for (a, b) in w.iter().zip(&j.value) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
        // central differences against the analytic derivatives
        let h = 1e-5;
        for a in 0..t.len() {
            let mut tp = t;
            let mut tm = t;
            tp[a] += h;
            tm[a] -= h;
            let (wp, wm) = (embed(&tp), embed(&tm));
            for k in 0..w.len() {
                assert_relative_eq!((wp[k] - wm[k]) / (2.0 * h), j.d1[a][k], epsilon = 1e-9);
            }
            let (jp, jm) = (jet(&tp), jet(&tm));
            for b in 0..t.len() {
                for k in 0..w.len() {
                    let fd = (jp.d1[b][k] - jm.d1[b][k]) / (2.0 * h);
                    assert_relative_eq!(fd, j.d2[a * t.len() + b][k], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn sphere_volumes() {
        use std::f64::consts::PI;
        assert_relative_eq!(unit_sphere_volume(1), 2.0 * PI);
        assert_relative_eq!(unit_sphere_volume(2), 4.0 * PI);
        assert_relative_eq!(unit_sphere_volume(3), 2.0 * PI * PI);
        assert_relative_eq!(unit_sphere_volume(4), 8.0 * PI * PI / 3.0);
    }
}
