//! Bounding volume hierarchy for closest-triangle queries.

use nalgebra::Vector3;

type V3 = Vector3<f64>;

#[derive(Debug, Clone, Copy)]
struct Node {
    lo: V3,
    hi: V3,
    /// Leaf: `start..start+count` into `order`; inner: children at `start`, `start+1`.
    start: u32,
    count: u32,
}

pub struct Bvh {
    nodes: Vec<Node>,
    tris: Vec<[V3; 3]>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn new(triangles: Vec<[V3; 3]>) -> Self {
        let centroids: Vec<V3> = triangles.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let mut nodes = vec![Node { lo: V3::zeros(), hi: V3::zeros(), start: 0, count: 0 }];
        let mut stack = vec![(0usize, 0usize, triangles.len())];
        while let Some((node, begin, end)) = stack.pop() {
            let (mut lo, mut hi) = (V3::repeat(f64::INFINITY), V3::repeat(f64::NEG_INFINITY));
            for &t in &order[begin..end] {
                for v in &triangles[t] {
                    lo = lo.inf(v);
                    hi = hi.sup(v);
                }
            }
            nodes[node].lo = lo;
            nodes[node].hi = hi;
            if end - begin <= LEAF_SIZE {
                nodes[node].start = begin as u32;
                nodes[node].count = (end - begin) as u32;
                continue;
            }
            let ext = hi - lo;
            let axis = if ext.x >= ext.y && ext.x >= ext.z {
                0
            } else if ext.y >= ext.z {
                1
            } else {
                2
            };
            let mid = (begin + end) / 2;
            order[begin..end].select_nth_unstable_by(mid - begin, |&a, &b| {
                centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
            });
            let left = nodes.len();
            nodes.push(Node { lo: V3::zeros(), hi: V3::zeros(), start: 0, count: 0 });
            nodes.push(Node { lo: V3::zeros(), hi: V3::zeros(), start: 0, count: 0 });
            nodes[node].start = left as u32;
            nodes[node].count = 0;
            stack.push((left, begin, mid));
            stack.push((left + 1, mid, end));
        }
        let tris = order.iter().map(|&i| triangles[i]).collect();
        Self { nodes, tris }
    }

    fn box_dist2(n: &Node, p: &V3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < n.lo[a] {
                n.lo[a] - p[a]
            } else if p[a] > n.hi[a] {
                p[a] - n.hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Squared distance from `p` to the nearest triangle, searching only
    /// within `bound2`; returns `bound2` when nothing closer exists.
    pub fn nearest_dist2(&self, p: &V3, bound2: f64) -> f64 {
        let mut best = bound2;
        let mut stack: [u32; 64] = [0; 64];
        let mut top = 1usize;
        stack[0] = 0;
        while top > 0 {
            top -= 1;
            let n = &self.nodes[stack[top] as usize];
            if Self::box_dist2(n, p) >= best {
                continue;
            }
            if n.count > 0 {
                for t in &self.tris[n.start as usize..(n.start + n.count) as usize] {
                    let d = point_triangle_dist2(p, t);
                    if d < best {
                        best = d;
                    }
                }
            } else {
                let (l, r) = (n.start, n.start + 1);
                let dl = Self::box_dist2(&self.nodes[l as usize], p);
                let dr = Self::box_dist2(&self.nodes[r as usize], p);
                // Push the farther child first so the nearer one is visited next.
                if dl < dr {
                    stack[top] = r;
                    stack[top + 1] = l;
                } else {
                    stack[top] = l;
                    stack[top + 1] = r;
                }
                top += 2;
            }
        }
        best
    }
}

/// Squared distance from a point to a triangle (closest-feature regions).
pub fn point_triangle_dist2(p: &V3, t: &[V3; 3]) -> f64 {
    let (a, b, c) = (t[0], t[1], t[2]);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm_squared();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm_squared();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (ap - ab * v).norm_squared();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm_squared();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (ap - ac * w).norm_squared();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - (c - b) * w).norm_squared();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (ap - ab * v - ac * w).norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn triangle_regions() {
        let t = [V3::new(0.0, 0.0, 0.0), V3::new(1.0, 0.0, 0.0), V3::new(0.0, 1.0, 0.0)];
        assert!((point_triangle_dist2(&V3::new(0.2, 0.2, 0.5), &t) - 0.25).abs() < 1e-15);
        assert!((point_triangle_dist2(&V3::new(-1.0, -1.0, 0.0), &t) - 2.0).abs() < 1e-15);
        assert!((point_triangle_dist2(&V3::new(0.5, -1.0, 0.0), &t) - 1.0).abs() < 1e-15);
        assert!((point_triangle_dist2(&V3::new(1.0, 1.0, 0.0), &t) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bvh_matches_brute_force() {
        let mesh = crate::mesh::primitives::icosphere(0.1, 2);
        let tris: Vec<_> = (0..mesh.triangles.len()).map(|i| mesh.triangle(i)).collect();
        let bvh = Bvh::new(tris.clone());
        let mut rng = crate::rng::seeded(1);
        for _ in 0..200 {
            let p = V3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            let brute = tris.iter().map(|t| point_triangle_dist2(&p, t)).fold(f64::INFINITY, f64::min);
            assert_eq!(bvh.nearest_dist2(&p, f64::INFINITY), brute);
        }
    }
}
