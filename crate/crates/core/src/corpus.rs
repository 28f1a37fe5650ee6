//! Seeded instance families: piecewise-linear maps on the line and the plane,
//! and the fixed corpora used by the regression suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calculus::{ChainInstance, ChainLink, Decomposition, SumInstance};
use crate::certify::CertConfig;
use crate::coderiv::{coderivative, graphical_derivative, mord_t};
use crate::error::{Error, Result};
use crate::geom::{vector, Halfspace, Polyhedron, Vector};
use crate::homog::HomogMap;
use crate::regcover::RegInstance;
use crate::svmap::{GraphPoint, SVMap};

/// Continuous piecewise-linear function on the line as a polyhedral graph.
///
/// `breaks` are offsets from `center` in increasing order, `slopes` has one
/// more entry than `breaks`, and the function takes `value` at `center`.
pub fn pl_line(center: f64, breaks: &[f64], slopes: &[f64], value: f64) -> Result<SVMap> {
    if slopes.len() != breaks.len() + 1 {
        return Err(Error::Invalid("need one more slope than breakpoints".into()));
    }
    if breaks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("breakpoints must increase".into()));
    }
    // intercepts in the shifted coordinate u = x - center
    let k = breaks.iter().filter(|b| **b <= 0.0).count();
    let mut c = vec![0.0; slopes.len()];
    c[k] = value;
    for i in k..breaks.len() {
        c[i + 1] = c[i] + (slopes[i] - slopes[i + 1]) * breaks[i];
    }
    for i in (0..k).rev() {
        c[i] = c[i + 1] + (slopes[i + 1] - slopes[i]) * breaks[i];
    }
    let mut pieces = Vec::with_capacity(slopes.len());
    for (i, (&s, &ci)) in slopes.iter().zip(&c).enumerate() {
        // y = s (x - center) + ci
        let off = ci - s * center;
        let mut hs = vec![
            Halfspace::new(vector(&[-s, 1.0]), off)?,
            Halfspace::new(vector(&[s, -1.0]), -off)?,
        ];
        if i > 0 {
            hs.push(Halfspace::new(vector(&[-1.0, 0.0]), -(center + breaks[i - 1]))?);
        }
        if i < breaks.len() {
            hs.push(Halfspace::new(vector(&[1.0, 0.0]), center + breaks[i])?);
        }
        pieces.push(Polyhedron::from_hrep(2, hs)?);
    }
    SVMap::poly_graph(1, 1, pieces)
}

/// Graph of `x -> max_i (a_i . x + c_i)` on the plane.
pub fn pl_max(affine: &[([f64; 2], f64)]) -> Result<SVMap> {
    let mut pieces = Vec::new();
    for (i, (a, c)) in affine.iter().enumerate() {
        let mut hs = vec![
            Halfspace::new(vector(&[-a[0], -a[1], 1.0]), *c)?,
            Halfspace::new(vector(&[a[0], a[1], -1.0]), -c)?,
        ];
        for (j, (b, d)) in affine.iter().enumerate() {
            if j != i {
                hs.push(Halfspace::new(vector(&[b[0] - a[0], b[1] - a[1], 0.0]), c - d)?);
            }
        }
        let p = Polyhedron::from_hrep(3, hs)?;
        if !p.is_empty() {
            pieces.push(p);
        }
    }
    SVMap::poly_graph(2, 1, pieces)
}

/// Epigraph map `x -> [max_i (a_i . x + c_i), inf)` in dimension `n`.
pub fn epi_max(n: usize, affine: &[(Vec<f64>, f64)]) -> Result<SVMap> {
    let hs = affine
        .iter()
        .map(|(a, c)| {
            let mut normal: Vec<f64> = a.clone();
            normal.push(-1.0);
            Halfspace::new(Vector::from_vec(normal), -c)
        })
        .collect::<Result<Vec<_>>>()?;
    SVMap::poly_graph(n, 1, vec![Polyhedron::from_hrep(n + 1, hs)?])
}

/// Map whose graph is a single polyhedron `{z : a_i . z <= b_i}`.
pub fn hrep_map(n: usize, m: usize, rows: &[(Vec<f64>, f64)]) -> Result<SVMap> {
    let hs = rows
        .iter()
        .map(|(a, b)| Halfspace::new(Vector::from_vec(a.clone()), *b))
        .collect::<Result<Vec<_>>>()?;
    SVMap::poly_graph(n, m, vec![Polyhedron::from_hrep(n + m, hs)?])
}

/// A labelled map with a base graph point.
#[derive(Clone, Debug)]
pub struct PointedMap {
    pub name: String,
    pub map: SVMap,
    pub point: GraphPoint,
}

fn pointed(name: &str, map: SVMap, x: &[f64], y: &[f64]) -> PointedMap {
    PointedMap { name: name.to_string(), map, point: GraphPoint { x: vector(x), y: vector(y) } }
}

/// Twelve polyhedral maps with finite coderivative norm, eight from the line
/// to the line and four from the plane to the line.
pub fn mordukhovich_corpus() -> Result<Vec<PointedMap>> {
    Ok(vec![
        pointed("slope_two", pl_line(0.0, &[], &[2.0], 0.0)?, &[0.0], &[0.0]),
        pointed("abs", pl_line(0.0, &[0.0], &[-1.0, 1.0], 0.0)?, &[0.0], &[0.0]),
        pointed("kink_half_three", pl_line(0.0, &[0.0], &[-0.5, 3.0], 0.0)?, &[0.0], &[0.0]),
        pointed("zigzag", pl_line(0.0, &[-0.5, 0.5], &[1.0, -2.0, 0.5], 0.0)?, &[0.5], &[-1.0]),
        pointed("epi_abs", epi_max(1, &[(vec![1.0], 0.0), (vec![-1.0], 0.0)])?, &[0.0], &[0.0]),
        pointed(
            "band",
            hrep_map(1, 1, &[(vec![-1.0, 1.0], 1.0), (vec![1.0, -1.0], 1.0)])?,
            &[0.0],
            &[1.0],
        ),
        pointed("lower_half_line", hrep_map(1, 1, &[(vec![-1.0, 1.0], 0.0)])?, &[0.0], &[0.0]),
        pointed("epi_two_slopes", epi_max(1, &[(vec![2.0], 0.0), (vec![-1.0], 0.0)])?, &[0.0], &[0.0]),
        pointed("plane_linear", pl_max(&[([1.0, 2.0], 0.0)])?, &[0.0, 0.0], &[0.0]),
        pointed("plane_max", pl_max(&[([1.0, 0.0], 0.0), ([0.0, 1.0], 0.0)])?, &[0.0, 0.0], &[0.0]),
        pointed(
            "plane_abs_tilt",
            pl_max(&[([1.0, 0.5], 0.0), ([-1.0, 0.5], 0.0)])?,
            &[0.0, 0.0],
            &[0.0],
        ),
        pointed("plane_epi", epi_max(2, &[(vec![1.0, -1.0], 0.0)])?, &[0.0, 0.0], &[0.0]),
    ])
}

/// Function names and base points for the Clarke suite.
pub fn clarke_corpus() -> Vec<(&'static str, Vec<f64>)> {
    vec![
        ("abs", vec![0.0]),
        ("neg_abs", vec![0.0]),
        ("square", vec![1.0]),
        ("max2", vec![0.0, 0.0]),
        ("abs_sum", vec![0.0, 0.0]),
        ("smooth2", vec![0.3, 0.2]),
        ("abs_pair", vec![0.0]),
    ]
}

/// Which derivative maps a generated calculus instance carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flavor {
    /// Graphical derivatives; the composed map is checked for the pseudo
    /// outer notion.
    Outer,
    /// Coderivative ball maps; the composed map is also checked for the
    /// pseudo strict notion.
    Strict,
}

fn random_slope(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let m = rng.gen_range(lo..hi);
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

/// Random continuous piecewise-linear function with a kink at `center` and
/// possibly one more breakpoint.
fn random_pl(rng: &mut ChaCha8Rng, center: f64, value: f64) -> Result<SVMap> {
    let pieces = rng.gen_range(1..=3);
    let mut breaks = Vec::new();
    if pieces >= 2 {
        breaks.push(0.0);
    }
    if pieces == 3 {
        let b = rng.gen_range(0.2..0.8);
        if rng.gen_bool(0.5) {
            breaks.insert(0, -b);
        } else {
            breaks.push(b);
        }
    }
    let slopes: Vec<f64> = (0..pieces).map(|_| random_slope(rng, 0.25, 2.0)).collect();
    pl_line(center, &breaks, &slopes, value)
}

/// Lower end of the value of a map on the line at `x`.
pub fn graph_value(s: &SVMap, x: f64) -> Result<f64> {
    let v = s.eval(&vector(&[x]))?;
    let p = v.pieces.first().ok_or(Error::EmptyRegion)?;
    Ok(p.interval_bounds().0)
}

fn derivative(s: &SVMap, x: &Vector, y: &Vector, flavor: Flavor) -> Result<HomogMap> {
    match flavor {
        Flavor::Outer => graphical_derivative(s, x, y),
        Flavor::Strict => mord_t(&coderivative(s, x, y)?),
    }
}

#[derive(Clone, Debug)]
pub struct ChainCase {
    pub instance: ChainInstance,
    pub flavor: Flavor,
}

/// Chain instances on the line, alternating between outer and strict maps.
pub fn chain_corpus(seed: u64, count: usize) -> Result<Vec<ChainCase>> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
            let flavor = if i % 2 == 0 { Flavor::Outer } else { Flavor::Strict };
            let y0 = rng.gen_range(-1.0..1.0);
            let f = random_pl(&mut rng, 0.0, y0)?;
            let z0 = rng.gen_range(-1.0..1.0);
            let g = random_pl(&mut rng, y0, z0)?;
            let (x, y, z) = (vector(&[0.0]), vector(&[y0]), vector(&[z0]));
            let link = ChainLink { t_in: derivative(&f, &x, &y, flavor)?, t_out: derivative(&g, &y, &z, flavor)?, y };
            Ok(ChainCase { instance: ChainInstance { f, g, xbar: x, zbar: z, net: vec![link] }, flavor })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SumCase {
    pub instance: SumInstance,
    pub flavor: Flavor,
}

/// Sums of two random piecewise-linear maps on the line.
pub fn sum_corpus(seed: u64, count: usize) -> Result<Vec<SumCase>> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_033).wrapping_add(i as u64));
            let flavor = if i % 2 == 0 { Flavor::Outer } else { Flavor::Strict };
            let x = vector(&[0.0]);
            let mut maps = Vec::new();
            let mut parts = Vec::new();
            let mut tmaps = Vec::new();
            for _ in 0..2 {
                let y0 = rng.gen_range(-1.0..1.0);
                let s = random_pl(&mut rng, 0.0, y0)?;
                let y = vector(&[y0]);
                tmaps.push(derivative(&s, &x, &y, flavor)?);
                parts.push(y);
                maps.push(s);
            }
            let ybar = &parts[0] + &parts[1];
            let net = vec![Decomposition { parts, tmaps }];
            Ok(SumCase { instance: SumInstance { maps, xbar: x, ybar, net, resolution: 1e-3 }, flavor })
        })
        .collect()
}

/// Which map a generated regularity instance is tested against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegChoice {
    /// Coderivative ball map of the inverse.
    Coderivative,
    /// Graphical derivative of the inverse.
    Graphical,
    /// Ball map with half the Lipschitz modulus of the inverse.
    Undersized,
}

#[derive(Clone, Debug)]
pub struct RegCase {
    pub instance: RegInstance,
    pub choice: RegChoice,
    pub slopes: Vec<f64>,
}

/// Monotone piecewise-linear maps on the line with slopes in `[1/3, 3]` and a
/// kink at the origin, each paired with a candidate map for the inverse.
pub fn regcover_corpus(seed: u64, count: usize) -> Result<Vec<RegCase>> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_037).wrapping_add(i as u64));
            let choice = [RegChoice::Coderivative, RegChoice::Graphical, RegChoice::Undersized][i % 3];
            let pieces = rng.gen_range(1..=3);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let slopes: Vec<f64> = loop {
                let s: Vec<f64> = (0..pieces).map(|_| sign * rng.gen_range(1.0 / 3.0..3.0)).collect();
                // the inverse slopes next to the kink must differ visibly
                let split = s.len() < 2 || (1.0 / s[0] - 1.0 / s[1]).abs() >= 0.3;
                if split {
                    break s;
                }
            };
            let breaks: Vec<f64> = match pieces {
                1 => vec![],
                2 => vec![0.0],
                _ => vec![0.0, rng.gen_range(0.2..0.8)],
            };
            let s = pl_line(0.0, &breaks, &slopes, 0.0)?;
            let inv = s.invert()?;
            let zero = vector(&[0.0]);
            let t = match choice {
                RegChoice::Coderivative => mord_t(&coderivative(&inv, &zero, &zero)?)?,
                RegChoice::Graphical => graphical_derivative(&inv, &zero, &zero)?,
                RegChoice::Undersized => {
                    let lip = slopes.iter().map(|m| 1.0 / m.abs()).fold(0.0, f64::max);
                    HomogMap::ball(1, 1, 0.5 * lip)?
                }
            };
            let point = GraphPoint { x: zero.clone(), y: zero };
            Ok(RegCase { instance: RegInstance { s, point, t, cfg: CertConfig::default() }, choice, slopes })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pl_line_is_continuous_with_the_right_slopes() {
        let s = pl_line(1.0, &[-0.5, 0.5], &[1.0, -2.0, 0.5], 3.0).unwrap();
        let f = |x: f64| graph_value(&s, x).unwrap();
        assert!((f(1.0) - 3.0).abs() < 1e-12);
        assert!((f(1.5) - 2.0).abs() < 1e-12);
        assert!((f(0.5) - 4.0).abs() < 1e-12);
        assert!((f(2.5) - 2.5).abs() < 1e-12);
        assert!((f(0.0) - 3.5).abs() < 1e-12);
        // one value everywhere
        for x in [-3.0, 0.5, 1.2, 4.0] {
            let v = s.eval(&vector(&[x])).unwrap();
            for p in &v.pieces {
                let (lo, hi) = p.interval_bounds();
                assert!((hi - lo).abs() < 1e-12);
                assert!((lo - f(x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn plane_max_values() {
        let s = pl_max(&[([1.0, 0.0], 0.0), ([0.0, 1.0], 0.0)]).unwrap();
        let v = s.eval(&vector(&[0.3, -0.2])).unwrap();
        assert!(v.contains(&vector(&[0.3]), 1e-12));
        assert!(!v.contains(&vector(&[-0.2]), 1e-9));
        let e = epi_max(2, &[(vec![1.0, -1.0], 0.5)]).unwrap();
        let (lo, hi) = e.eval(&vector(&[1.0, 0.0])).unwrap().pieces[0].interval_bounds();
        assert!((lo - 1.5).abs() < 1e-12 && hi == f64::INFINITY);
    }

    #[test]
    fn corpora_are_well_formed() {
        let m = mordukhovich_corpus().unwrap();
        assert_eq!(m.len(), 12);
        for p in &m {
            assert!(p.map.on_graph(&p.point.x, &p.point.y, 1e-9).unwrap(), "{}", p.name);
        }
        assert_eq!(m.iter().filter(|p| p.map.dim_in() == 2).count(), 4);
        for c in chain_corpus(0, 10).unwrap() {
            let i = &c.instance;
            assert!(i.f.on_graph(&i.xbar, &i.net[0].y, 1e-9).unwrap());
            assert!(i.g.on_graph(&i.net[0].y, &i.zbar, 1e-9).unwrap());
        }
        for c in sum_corpus(0, 6).unwrap() {
            let i = &c.instance;
            let total = graph_value(&i.maps[0], 0.0).unwrap() + graph_value(&i.maps[1], 0.0).unwrap();
            assert!((total - i.ybar[0]).abs() < 1e-12);
        }
        let r = regcover_corpus(0, 20).unwrap();
        assert_eq!(r.len(), 20);
        assert!(r.iter().all(|c| c.slopes.iter().all(|s| (1.0 / 3.0..3.0).contains(&s.abs()))));
    }

    #[test]
    fn generators_are_seeded() {
        let a = chain_corpus(7, 3).unwrap();
        let b = chain_corpus(7, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.instance.zbar, y.instance.zbar);
            assert_eq!(
                serde_json::to_string(&x.instance.f).unwrap(),
                serde_json::to_string(&y.instance.f).unwrap()
            );
        }
    }
}
