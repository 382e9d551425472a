//! Composite quadrature on [0, 1] in the warped coordinate.
//!
//! Panels are the `n` uniform cells `[i/n, (i+1)/n)`; any extra breakpoint
//! (a discontinuity of the integrand) splits the panel containing it so that
//! no node straddles a jump.

/// Per-panel rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Midpoint,
    GaussLegendre4,
}

const GL4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// A set of quadrature nodes and weights on [0, 1].
#[derive(Debug, Clone)]
pub struct Nodes {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Nodes {
    pub fn new(panels: usize, breaks: &[f64], rule: Rule) -> Self {
        let panels = panels.max(1);
        let mut inner: Vec<f64> = breaks
            .iter()
            .copied()
            .filter(|b| *b > 0.0 && *b < 1.0)
            .collect();
        inner.sort_by(f64::total_cmp);
        inner.dedup();

        let per = match rule {
            Rule::Midpoint => 1,
            Rule::GaussLegendre4 => 4,
        };
        let mut points = Vec::with_capacity(per * (panels + inner.len()));
        let mut weights = Vec::with_capacity(points.capacity());
        let mut push = |a: f64, b: f64| {
            if b <= a {
                return;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            match rule {
                Rule::Midpoint => {
                    points.push(mid);
                    weights.push(b - a);
                }
                Rule::GaussLegendre4 => {
                    for (t, w) in GL4_NODES.iter().zip(GL4_WEIGHTS.iter()) {
                        points.push(mid + half * t);
                        weights.push(half * w);
                    }
                }
            }
        };

        let width = 1.0 / panels as f64;
        let mut next_break = 0;
        for i in 0..panels {
            let lo = i as f64 * width;
            let hi = if i + 1 == panels { 1.0 } else { (i + 1) as f64 * width };
            let mut a = lo;
            while next_break < inner.len() && inner[next_break] < hi {
                let b = inner[next_break];
                if b > a {
                    push(a, b);
                    a = b;
                }
                next_break += 1;
            }
            push(a, hi);
        }
        Nodes { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&u, &w)| w * g(u))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        for rule in [Rule::Midpoint, Rule::GaussLegendre4] {
            let nodes = Nodes::new(37, &[0.3, 0.3, 0.72, 1.0, 0.0], rule);
            let total: f64 = nodes.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn gauss_legendre_is_exact_for_cubics() {
        let nodes = Nodes::new(1, &[], Rule::GaussLegendre4);
        let v = nodes.integrate(|u| 4.0 * u * u * u - u * u + 2.0);
        assert!((v - (1.0 - 1.0 / 3.0 + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn breakpoints_make_step_functions_exact() {
        let step = |u: f64| if u < 0.123 { 2.0 } else { -1.0 };
        let nodes = Nodes::new(8, &[0.123], Rule::Midpoint);
        let v = nodes.integrate(step);
        assert!((v - (2.0 * 0.123 - 0.877)).abs() < 1e-14);
    }
}
