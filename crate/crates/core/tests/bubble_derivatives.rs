use bubble_core::bubble::{bubble_constant, Bubble, Parameter, ParamDerivative};
use bubble_core::norms::fibonacci_sphere;
use bubble_core::projection::ProjectedBubble;
use bubble_core::AnnulusGeometry;

fn geom() -> AnnulusGeometry {
    AnnulusGeometry::new(1.0, 2.0, 3).unwrap()
}

/// Points on shells of radius `s/λ` around `center` that stay inside the annulus.
fn shells(g: &AnnulusGeometry, center: [f64; 3], lambda: f64) -> Vec<Vec<f64>> {
    let mut out = vec![center.to_vec()];
    for s in [0.25, 0.5, 1.0, 2.0, 4.0] {
        for d in fibonacci_sphere(24) {
            let y: Vec<f64> = (0..3).map(|i| center[i] + s / lambda * d[i]).collect();
            if g.contains_closure(&y) && g.boundary_distance(&y) > 1e-3 {
                out.push(y);
            }
        }
    }
    out
}

#[test]
fn lambda_derivative_scales_like_u_over_lambda() {
    let g = geom();
    let center = [1.5, 0.0, 0.0];
    let mut ratios = Vec::new();
    for lambda in [10.0, 20.0, 40.0] {
        let pb = ProjectedBubble::new(Bubble::new(center.to_vec(), lambda).unwrap(), &g).unwrap();
        let z = ParamDerivative::new(&pb, Parameter::Lambda).unwrap();
        let pts = shells(&g, center, lambda);
        let sup_z = pts.iter().map(|y| z.eval(y).unwrap().abs()).fold(0.0, f64::max);
        let sup_u = bubble_constant(3) * lambda.sqrt();
        ratios.push(sup_z * lambda / sup_u);
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(*r), h.max(*r)));
    assert!(hi < 1.0 && hi / lo < 1.5, "ratios {ratios:?}");
}

#[test]
fn parameter_derivatives_vanish_on_the_boundary() {
    let g = geom();
    let center = [1.5, 0.0, 0.0];
    let lambda = 20.0;
    let pb = ProjectedBubble::new(Bubble::new(center.to_vec(), lambda).unwrap(), &g).unwrap();
    for which in [Parameter::Lambda, Parameter::Radius] {
        let z = ParamDerivative::new(&pb, which).unwrap();
        let interior = shells(&g, center, lambda)
            .iter()
            .map(|y| z.eval(y).unwrap().abs())
            .fold(0.0, f64::max);
        let mut boundary: f64 = 0.0;
        for d in fibonacci_sphere(200) {
            for rho in [g.a, g.b] {
                let y: Vec<f64> = d.iter().map(|c| rho * c).collect();
                boundary = boundary.max(z.eval(&y).unwrap().abs());
            }
        }
        assert!(boundary < 1e-4 * interior, "{which:?}: boundary {boundary:.3e}, interior {interior:.3e}");
    }
}
