//! Five-point finite-difference operators on nonuniform grids with pole
//! reflection and periodic wrap.

/// Reflection parity of a field across a pole.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// How the grid is closed off at one end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    /// Smooth reflection across the end node.
    Pole,
    /// One-sided stencils.
    Free,
}

/// Fornberg's recursion: weights for derivatives 0..=m at `z` on nodes `xs`.
pub fn fornberg(z: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let np = xs.len();
    let mut c = vec![vec![0.0; np]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    for i in 1..np {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    src: usize,
    mirrored: bool,
}

/// Precomputed first- and second-derivative weights for one grid.
#[derive(Debug, Clone)]
pub struct Stencil {
    taps: Vec<[Tap; 5]>,
    w1: Vec<[f64; 5]>,
    w2: Vec<[f64; 5]>,
}

impl Stencil {
    /// Stencil for an interval grid closed off by `left` and `right`.
    pub fn interval(x: &[f64], left: End, right: End) -> Self {
        let n = x.len();
        assert!(n >= 5, "stencil needs at least 5 nodes");
        let last = n - 1;
        let mut st = Stencil { taps: Vec::with_capacity(n), w1: Vec::with_capacity(n), w2: Vec::with_capacity(n) };
        for i in 0..n {
            let mut taps = [Tap { src: 0, mirrored: false }; 5];
            let mut pos = [0.0; 5];
            let mut start = i as isize - 2;
            if left == End::Free && start < 0 {
                start = 0;
            }
            if right == End::Free && start + 4 > last as isize {
                start = last as isize - 4;
            }
            for k in 0..5 {
                let j = start + k as isize;
                if j < 0 {
                    let s = (-j) as usize;
                    taps[k] = Tap { src: s, mirrored: true };
                    pos[k] = 2.0 * x[0] - x[s];
                } else if j as usize > last {
                    let s = 2 * last - j as usize;
                    taps[k] = Tap { src: s, mirrored: true };
                    pos[k] = 2.0 * x[last] - x[s];
                } else {
                    taps[k] = Tap { src: j as usize, mirrored: false };
                    pos[k] = x[j as usize];
                }
            }
            st.push(x[i], taps, &pos);
        }
        st
    }

    /// Stencil for a periodic grid of the given period.
    pub fn periodic(x: &[f64], period: f64) -> Self {
        let n = x.len();
        assert!(n >= 5, "stencil needs at least 5 nodes");
        let mut st = Stencil { taps: Vec::with_capacity(n), w1: Vec::with_capacity(n), w2: Vec::with_capacity(n) };
        for i in 0..n {
            let mut taps = [Tap { src: 0, mirrored: false }; 5];
            let mut pos = [0.0; 5];
            for k in 0..5 {
                let j = i as isize + k as isize - 2;
                let (src, shift) = if j < 0 {
                    ((j + n as isize) as usize, -period)
                } else if j as usize >= n {
                    (j as usize - n, period)
                } else {
                    (j as usize, 0.0)
                };
                taps[k] = Tap { src, mirrored: false };
                pos[k] = x[src] + shift;
            }
            st.push(x[i], taps, &pos);
        }
        st
    }

    fn push(&mut self, z: f64, taps: [Tap; 5], pos: &[f64; 5]) {
        let local: Vec<f64> = pos.iter().map(|p| p - z).collect();
        let c = fornberg(0.0, &local, 2);
        let mut w1 = [0.0; 5];
        let mut w2 = [0.0; 5];
        for k in 0..5 {
            w1[k] = c[1][k];
            w2[k] = c[2][k];
        }
        self.taps.push(taps);
        self.w1.push(w1);
        self.w2.push(w2);
    }

    #[inline]
    fn apply(&self, w: &[[f64; 5]], f: &[f64], parity: Parity, i: usize) -> f64 {
        // differences against the centre value keep constants exact
        let centre = f[i];
        let mut acc = 0.0;
        for k in 0..5 {
            let t = self.taps[i][k];
            let v = if t.mirrored && parity == Parity::Odd { -f[t.src] } else { f[t.src] };
            acc += w[i][k] * (v - centre);
        }
        acc
    }

    pub fn d1_at(&self, f: &[f64], parity: Parity, i: usize) -> f64 {
        self.apply(&self.w1, f, parity, i)
    }

    pub fn d2_at(&self, f: &[f64], parity: Parity, i: usize) -> f64 {
        self.apply(&self.w2, f, parity, i)
    }

    pub fn d1(&self, f: &[f64], parity: Parity) -> Vec<f64> {
        (0..f.len()).map(|i| self.d1_at(f, parity, i)).collect()
    }

    pub fn d2(&self, f: &[f64], parity: Parity) -> Vec<f64> {
        (0..f.len()).map(|i| self.d2_at(f, parity, i)).collect()
    }
}
