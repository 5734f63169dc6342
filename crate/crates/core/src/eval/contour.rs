use std::collections::HashMap;

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// KDE bandwidth; Scott's rule when unset.
    pub bandwidth: Option<f64>,
    /// Fraction of points inside the returned level set.
    pub mass: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nx: 128,
            ny: 128,
            bandwidth: None,
            mass: 0.97,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    /// Density level whose superlevel set holds `mass` of the points.
    pub level: f64,
    pub bandwidth: f64,
    /// Iso-lines at `level`; closed lines repeat their first point.
    pub polylines: Vec<Vec<[f64; 2]>>,
}

impl Contour {
    /// Fraction of `points` whose density is at least the level.
    pub fn containment(&self, points: &[[f64; 2]]) -> f64 {
        let inside = points.iter().filter(|p| kde(points, self.bandwidth, **p) >= self.level).count();
        inside as f64 / points.len() as f64
    }
}

fn kde(points: &[[f64; 2]], h: f64, at: [f64; 2]) -> f64 {
    let inv = -0.5 / (h * h);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * h * h * points.len() as f64);
    norm * points
        .iter()
        .map(|p| {
            let (dx, dy) = (p[0] - at[0], p[1] - at[1]);
            ((dx * dx + dy * dy) * inv).exp()
        })
        .sum::<f64>()
}

/// Highest-density region of a 2-D point cloud: a Gaussian KDE, the level
/// below which only `1 - mass` of the points' own densities fall, and the
/// iso-line at that level traced on a grid by marching squares.
pub fn contour_97(points: &[[f64; 2]], grid: GridSpec) -> Result<Contour, EvalError> {
    let n = points.len();
    if n < 100 {
        return Err(EvalError::Degenerate(format!("need at least 100 points, got {n}")));
    }
    let mean = [0, 1].map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64);
    let var = [0, 1].map(|j| points.iter().map(|p| (p[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1) as f64);
    let sd = ((var[0] + var[1]) / 2.0).sqrt();
    if !(sd > 0.0) {
        return Err(EvalError::Degenerate("all points identical".into()));
    }
    let h = grid.bandwidth.unwrap_or(sd * (n as f64).powf(-1.0 / 6.0));

    let mut dens: Vec<f64> = points.iter().map(|p| kde(points, h, *p)).collect();
    dens.sort_by(f64::total_cmp);
    let cut = (((1.0 - grid.mass) * n as f64).floor() as usize).min(n - 1);
    let level = dens[cut];

    let lo = [0, 1].map(|j| points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min) - 3.0 * h);
    let hi = [0, 1].map(|j| points.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max) + 3.0 * h);
    let (nx, ny) = (grid.nx.max(2), grid.ny.max(2));
    let gx: Vec<f64> = (0..nx).map(|i| lo[0] + (hi[0] - lo[0]) * i as f64 / (nx - 1) as f64).collect();
    let gy: Vec<f64> = (0..ny).map(|j| lo[1] + (hi[1] - lo[1]) * j as f64 / (ny - 1) as f64).collect();
    let field: Vec<f64> = (0..ny)
        .flat_map(|j| gx.iter().map(move |&x| (x, j)))
        .map(|(x, j)| kde(points, h, [x, gy[j]]))
        .collect();
    let polylines = march(&field, &gx, &gy, level);
    Ok(Contour {
        level,
        bandwidth: h,
        polylines,
    })
}

/// Edge identifiers: horizontal edge `(i, j)-(i+1, j)` or vertical edge
/// `(i, j)-(i, j+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

fn march(field: &[f64], gx: &[f64], gy: &[f64], level: f64) -> Vec<Vec<[f64; 2]>> {
    let nx = gx.len();
    let f = |i: usize, j: usize| field[j * nx + i];
    let point = |e: Edge| -> [f64; 2] {
        let (a, b, pa, pb) = match e {
            Edge::H(i, j) => (f(i, j), f(i + 1, j), [gx[i], gy[j]], [gx[i + 1], gy[j]]),
            Edge::V(i, j) => (f(i, j), f(i, j + 1), [gx[i], gy[j]], [gx[i], gy[j + 1]]),
        };
        let t = if b != a { ((level - a) / (b - a)).clamp(0.0, 1.0) } else { 0.5 };
        [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
    };
    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for j in 0..gy.len() - 1 {
        for i in 0..nx - 1 {
            let c = [f(i, j), f(i + 1, j), f(i + 1, j + 1), f(i, j + 1)];
            let above = c.map(|v| v >= level);
            // edges: bottom, right, top, left
            let edges = [Edge::H(i, j), Edge::V(i + 1, j), Edge::H(i, j + 1), Edge::V(i, j)];
            let crossed: Vec<usize> = (0..4).filter(|&k| above[k] != above[(k + 1) % 4]).collect();
            match crossed.len() {
                2 => segments.push((edges[crossed[0]], edges[crossed[1]])),
                4 => {
                    // saddle: resolve with the cell-centre value
                    let centre = c.iter().sum::<f64>() / 4.0 >= level;
                    if centre == above[0] {
                        segments.push((edges[0], edges[1]));
                        segments.push((edges[2], edges[3]));
                    } else {
                        segments.push((edges[3], edges[0]));
                        segments.push((edges[1], edges[2]));
                    }
                }
                _ => {}
            }
        }
    }
    // chain segments through shared edges
    let mut adj: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        adj.entry(*a).or_default().push(s);
        adj.entry(*b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let walk = |start_edge: Edge, first: usize, used: &mut Vec<bool>| {
        let mut path = vec![start_edge];
        let mut seg = first;
        let mut at = start_edge;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            let next = if a == at { b } else { a };
            path.push(next);
            at = next;
            match adj[&at].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => break,
            }
        }
        path
    };
    // open lines start at edges touched once, then close the loops
    let mut starts: Vec<(Edge, usize)> = adj
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(e, v)| (*e, v[0]))
        .collect();
    starts.sort_by_key(|&(_, s)| s);
    for (e, s) in starts {
        if !used[s] {
            lines.push(walk(e, s, &mut used));
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            lines.push(walk(segments[s].0, s, &mut used));
        }
    }
    lines.into_iter().map(|l| l.into_iter().map(point).collect()).collect()
}
