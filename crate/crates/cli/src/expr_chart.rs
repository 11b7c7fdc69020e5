//! Charts described by expressions in the configuration file.
//!
//! Each of the `n + 1` spatial coordinates is an expression in the chart
//! parameters `u0, ..., u{n-1}`; the time coordinate is solved from the
//! hyperboloid equation. Constants `c`, `kappa` and `pi` are predefined, and
//! elementary functions may be written without the `math::` prefix.

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node,
    Operator, Value,
};
use hyperlab::{
    ChartDomain, CoordKind, DerivativeMode, FnChart, ImmersedHypersurface, Orientation, SpaceForm,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Per coordinate; coordinates are bounded unless marked periodic.
    #[serde(default)]
    pub periodic: Vec<bool>,
    /// Spatial coordinates `x_1, ..., x_{n+1}` as expressions in `u0, ...`.
    pub spatial: Vec<String>,
    #[serde(default)]
    pub base_point: Option<Vec<f64>>,
    /// Bound on the parameter speed `|dx(xi)|/|xi|`; sharpens cell classification.
    #[serde(default)]
    pub lipschitz: Option<f64>,
    /// The box covers `M ∩ B_r` only up to this radius.
    #[serde(default)]
    pub covering_radius: Option<f64>,
    #[serde(default)]
    pub orientation: Orientation,
    /// Step of the finite-difference derivatives.
    #[serde(default)]
    pub derivative_step: Option<f64>,
}

#[derive(Debug)]
pub struct ExprError(pub String);

impl std::fmt::Display for ExprError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ExprError {}

const FUNCTIONS: [&str; 22] = [
    "ln", "log", "log2", "log10", "exp", "exp2", "pow", "cos", "acos", "cosh", "acosh", "sin",
    "asin", "sinh", "asinh", "tan", "atan", "tanh", "atanh", "atan2", "sqrt", "hypot",
];

/// Makes integer literals floating point so that `1/2` is one half.
fn floatify(node: &mut Node<DefaultNumericTypes>) {
    if let Operator::Const { value } = node.operator_mut() {
        if let Value::Int(i) = value {
            *value = Value::Float(*i as f64);
        }
    }
    for child in node.children_mut() {
        floatify(child);
    }
}

fn compile(text: &str, dim: usize) -> Result<Node<DefaultNumericTypes>, ExprError> {
    let mut node = build_operator_tree::<DefaultNumericTypes>(text)
        .map_err(|e| ExprError(format!("cannot parse `{text}`: {e}")))?;
    for name in node.iter_function_identifiers_mut() {
        if FUNCTIONS.contains(&name.as_str()) {
            *name = format!("math::{name}");
        }
    }
    floatify(&mut node);
    for var in node.iter_variable_identifiers() {
        let known = matches!(var, "c" | "kappa" | "pi")
            || var
                .strip_prefix('u')
                .and_then(|k| k.parse::<usize>().ok())
                .is_some_and(|k| k < dim);
        if !known {
            return Err(ExprError(format!("unknown variable `{var}` in `{text}`")));
        }
    }
    Ok(node)
}

struct Program {
    exprs: Vec<Node<DefaultNumericTypes>>,
    kappa: f64,
    dim: usize,
}

impl Program {
    fn eval(&self, u: &[f64]) -> Result<DVector<f64>, ExprError> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        let c = (-self.kappa).sqrt();
        let mut set = |name: String, v: f64| {
            ctx.set_value(name, Value::from_float(v))
                .map_err(|e| ExprError(e.to_string()))
        };
        set("c".into(), c)?;
        set("kappa".into(), self.kappa)?;
        set("pi".into(), std::f64::consts::PI)?;
        for (k, &v) in u.iter().enumerate().take(self.dim) {
            set(format!("u{k}"), v)?;
        }
        let mut x = DVector::zeros(self.exprs.len() + 1);
        let mut sq = 0.0;
        for (i, e) in self.exprs.iter().enumerate() {
            let v = e
                .eval_number_with_context(&ctx)
                .map_err(|err| ExprError(format!("evaluation failed: {err}")))?;
            x[i + 1] = v;
            sq += v * v;
        }
        x[0] = (sq - 1.0 / self.kappa).sqrt();
        Ok(x)
    }
}

impl ChartConfig {
    pub fn build(
        &self,
        space: &SpaceForm,
    ) -> Result<hyperlab::Result<ImmersedHypersurface>, ExprError> {
        let n = space.n();
        if self.lo.len() != n || self.hi.len() != n {
            return Err(ExprError(format!("chart.lo and chart.hi need {n} entries")));
        }
        if self.spatial.len() != n + 1 {
            return Err(ExprError(format!(
                "chart.spatial needs {} expressions, got {}",
                n + 1,
                self.spatial.len()
            )));
        }
        if !self.periodic.is_empty() && self.periodic.len() != n {
            return Err(ExprError(format!("chart.periodic needs {n} entries")));
        }
        let kinds = (0..n)
            .map(|k| match self.periodic.get(k) {
                Some(true) => CoordKind::Periodic,
                _ => CoordKind::Bounded,
            })
            .collect();
        let domain = ChartDomain::new(self.lo.clone(), self.hi.clone(), kinds)
            .map_err(|e| ExprError(e.to_string()))?;
        let program = Program {
            exprs: self
                .spatial
                .iter()
                .map(|s| compile(s, n))
                .collect::<Result<_, _>>()?,
            kappa: space.kappa(),
            dim: n,
        };
        let probe = self.base_point.clone().unwrap_or_else(|| {
            self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
        });
        program.eval(&probe)?;
        let len = n + 2;
        let mut chart = FnChart::new(domain, move |u| {
            program
                .eval(u)
                .unwrap_or_else(|_| DVector::from_element(len, f64::NAN))
        })
        .map_err(|e| ExprError(e.to_string()))?;
        if let Some(b) = &self.base_point {
            chart = chart.with_base_point(b.clone());
        }
        if let Some(l) = self.lipschitz {
            chart = chart.with_lipschitz(l);
        }
        if let Some(r) = self.covering_radius {
            chart = chart.covering_balls_up_to(r);
        }
        let mode = DerivativeMode::FiniteDifference {
            step: self.derivative_step.unwrap_or(1e-4),
        };
        Ok(ImmersedHypersurface::with_mode(
            space.clone(),
            vec![Box::new(chart)],
            self.orientation,
            mode,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_chart(radius: f64) -> ChartConfig {
        let pi = std::f64::consts::PI;
        let r = format!("math::sinh({radius})");
        ChartConfig {
            lo: vec![0.05, 0.05, 0.0],
            hi: vec![pi - 0.05, pi - 0.05, 2.0 * pi],
            periodic: vec![false, false, true],
            spatial: vec![
                format!("{r} * cos(u0)"),
                format!("{r} * sin(u0) * cos(u1)"),
                format!("{r} * sin(u0) * sin(u1) * cos(u2)"),
                format!("{r} * sin(u0) * sin(u1) * sin(u2)"),
            ],
            base_point: None,
            lipschitz: None,
            covering_radius: None,
            orientation: Orientation::MeanConvex,
            derivative_step: None,
        }
    }

    #[test]
    fn expression_sphere_has_umbilic_curvature() {
        let space = SpaceForm::new(-1.0, 3).unwrap();
        let surface = sphere_chart(1.0).build(&space).unwrap().unwrap();
        let expected = 1.0 / 1.0f64.tanh();
        for u in [[0.7, 1.1, 0.3], [2.0, 0.4, 5.0], [1.5, 2.5, 3.0]] {
            let cp = surface.curvature_at(0, &u).unwrap();
            assert!((cp.mean - expected).abs() < 1e-6, "{}", cp.mean);
            assert!(space.hyperboloid_residual(cp.x.as_slice()) < 1e-12);
        }
    }

    #[test]
    fn integer_literals_divide_as_reals() {
        let node = compile("1/2 + u0", 1).unwrap();
        let program = Program {
            exprs: vec![node],
            kappa: -1.0,
            dim: 1,
        };
        let x = program.eval(&[1.0]).unwrap();
        assert_eq!(x[1], 1.5);
    }

    #[test]
    fn unknown_variables_and_bad_arity_are_rejected() {
        assert!(compile("u3 + 1", 3).is_err());
        assert!(compile("radius * u0", 3).is_err());
        let space = SpaceForm::new(-1.0, 3).unwrap();
        let mut chart = sphere_chart(1.0);
        chart.spatial.pop();
        assert!(chart.build(&space).is_err());
    }
}
