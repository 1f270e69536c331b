//! Binary morphology on `Vec<bool>` masks: thinning, connected components,
//! dilation/erosion, flood fill and Chebyshev distance.

use std::collections::VecDeque;

/// 8-neighborhood offsets in clockwise order starting north (y grows down).
pub const RING: [(i64, i64); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

pub const FOUR: [(i64, i64); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height);
        Self { width, height, bits }
    }

    #[inline]
    pub fn get(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn neighbor_count(&self, x: usize, y: usize) -> usize {
        RING.iter().filter(|(dx, dy)| self.get(x as i64 + dx, y as i64 + dy)).count()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask::from_bits(self.width, self.height, self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect())
    }

    pub fn or(&self, other: &Mask) -> Mask {
        Mask::from_bits(self.width, self.height, self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect())
    }

    pub fn not(&self) -> Mask {
        Mask::from_bits(self.width, self.height, self.bits.iter().map(|b| !b).collect())
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }
}

/// Dilation by a square of Chebyshev radius `r`.
pub fn dilate(m: &Mask, r: usize) -> Mask {
    if r == 0 {
        return m.clone();
    }
    let d = chebyshev_distance(m);
    Mask::from_bits(m.width, m.height, d.iter().map(|&v| v <= r as u32).collect())
}

/// Erosion by a square of Chebyshev radius `r`; pixels outside the canvas
/// count as off.
pub fn erode(m: &Mask, r: usize) -> Mask {
    if r == 0 {
        return m.clone();
    }
    let mut out = Mask::new(m.width, m.height);
    let r = r as i64;
    for y in 0..m.height {
        for x in 0..m.width {
            if !m.bits[y * m.width + x] {
                continue;
            }
            let mut keep = true;
            'win: for dy in -r..=r {
                for dx in -r..=r {
                    if !m.get(x as i64 + dx, y as i64 + dy) {
                        keep = false;
                        break 'win;
                    }
                }
            }
            out.set(x, y, keep);
        }
    }
    out
}

/// 3x3 closing; erosion treats off-canvas pixels as on so closing never
/// shrinks shapes touching the border.
pub fn close3(m: &Mask) -> Mask {
    let d = dilate(m, 1);
    let mut out = Mask::new(m.width, m.height);
    for y in 0..m.height as i64 {
        for x in 0..m.width as i64 {
            let mut keep = true;
            'win: for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    let inside = nx >= 0 && ny >= 0 && (nx as usize) < m.width && (ny as usize) < m.height;
                    if inside && !d.bits[ny as usize * m.width + nx as usize] {
                        keep = false;
                        break 'win;
                    }
                }
            }
            out.set(x as usize, y as usize, keep);
        }
    }
    out
}

/// Chebyshev distance to the nearest on-pixel (u32::MAX when the mask is empty).
pub fn chebyshev_distance(m: &Mask) -> Vec<u32> {
    let mut dist = vec![u32::MAX; m.bits.len()];
    let mut queue = VecDeque::new();
    for (i, &b) in m.bits.iter().enumerate() {
        if b {
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % m.width) as i64, (i / m.width) as i64);
        for (dx, dy) in RING {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx as usize >= m.width || ny as usize >= m.height {
                continue;
            }
            let j = ny as usize * m.width + nx as usize;
            if dist[j] == u32::MAX {
                dist[j] = dist[i] + 1;
                queue.push_back(j);
            }
        }
    }
    dist
}

/// Labels connected components (8- or 4-connectivity). Labels are assigned
/// in raster order of each component's first pixel; off pixels get `None`.
pub fn components(m: &Mask, eight: bool) -> (Vec<Option<u32>>, Vec<usize>) {
    let mut labels = vec![None; m.bits.len()];
    let mut sizes = Vec::new();
    let offsets: &[(i64, i64)] = if eight { &RING } else { &FOUR };
    let mut queue = VecDeque::new();
    for start in 0..m.bits.len() {
        if !m.bits[start] || labels[start].is_some() {
            continue;
        }
        let label = sizes.len() as u32;
        let mut size = 0;
        labels[start] = Some(label);
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % m.width) as i64, (i / m.width) as i64);
            for &(dx, dy) in offsets {
                if m.get(x + dx, y + dy) {
                    let j = (y + dy) as usize * m.width + (x + dx) as usize;
                    if labels[j].is_none() {
                        labels[j] = Some(label);
                        queue.push_back(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Off-pixels reachable from the canvas border through 4-connected off-pixels.
pub fn exterior(walls: &Mask) -> Mask {
    let (w, h) = (walls.width, walls.height);
    let mut out = Mask::new(w, h);
    let mut queue = VecDeque::new();
    let seed = |x: usize, y: usize, out: &mut Mask, q: &mut VecDeque<usize>| {
        let i = y * w + x;
        if !walls.bits[i] && !out.bits[i] {
            out.bits[i] = true;
            q.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, 0, &mut out, &mut queue);
        seed(x, h - 1, &mut out, &mut queue);
    }
    for y in 0..h {
        seed(0, y, &mut out, &mut queue);
        seed(w - 1, y, &mut out, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for (dx, dy) in FOUR {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                continue;
            }
            let j = ny as usize * w + nx as usize;
            if !walls.bits[j] && !out.bits[j] {
                out.bits[j] = true;
                queue.push_back(j);
            }
        }
    }
    out
}

fn ring_bits(m: &Mask, x: usize, y: usize) -> [bool; 8] {
    let mut r = [false; 8];
    for (k, (dx, dy)) in RING.iter().enumerate() {
        r[k] = m.get(x as i64 + dx, y as i64 + dy);
    }
    r
}

fn transitions(r: &[bool; 8]) -> usize {
    (0..8).filter(|&k| !r[k] && r[(k + 1) % 8]).count()
}

/// True when the on-neighbors of a pixel form a single 8-connected group
/// within its ring, i.e. removing the pixel keeps local connectivity.
fn ring_single_group(r: &[bool; 8]) -> bool {
    // Ring members k and k+1 are always 8-adjacent; additionally the two
    // 4-neighbors flanking a diagonal are adjacent to each other across it.
    let on: Vec<usize> = (0..8).filter(|&k| r[k]).collect();
    if on.is_empty() {
        return false;
    }
    let mut seen = [false; 8];
    let mut stack = vec![on[0]];
    seen[on[0]] = true;
    while let Some(k) = stack.pop() {
        let mut nbrs = vec![(k + 1) % 8, (k + 7) % 8];
        if k % 2 == 0 {
            nbrs.push((k + 2) % 8);
            nbrs.push((k + 6) % 8);
        }
        for n in nbrs {
            if r[n] && !seen[n] {
                seen[n] = true;
                stack.push(n);
            }
        }
    }
    on.iter().all(|&k| seen[k])
}

/// Zhang-Suen thinning followed by removal of redundant staircase corners,
/// leaving curves one pixel wide in the 8-connected sense.
pub fn thin(m: &Mask) -> Mask {
    let mut cur = m.clone();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for y in 0..cur.height {
                for x in 0..cur.width {
                    if !cur.bits[y * cur.width + x] {
                        continue;
                    }
                    let r = ring_bits(&cur, x, y);
                    let b = r.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) || transitions(&r) != 1 {
                        continue;
                    }
                    // ring index: 0=N(P2) 2=E(P4) 4=S(P6) 6=W(P8)
                    let ok = if pass == 0 {
                        !(r[0] && r[2] && r[4]) && !(r[2] && r[4] && r[6])
                    } else {
                        !(r[0] && r[2] && r[6]) && !(r[0] && r[4] && r[6])
                    };
                    if ok {
                        remove.push(y * cur.width + x);
                    }
                }
            }
            if !remove.is_empty() {
                changed = true;
                for i in remove {
                    cur.bits[i] = false;
                }
            }
        }
        if !changed {
            break;
        }
    }
    remove_staircase(&mut cur);
    cur
}

/// Deletes L-corner pixels whose removal keeps their neighbors connected.
pub fn remove_staircase(m: &mut Mask) {
    for y in 0..m.height {
        for x in 0..m.width {
            if !m.bits[y * m.width + x] {
                continue;
            }
            let r = ring_bits(m, x, y);
            let l_corner = (r[0] && r[2]) || (r[2] && r[4]) || (r[4] && r[6]) || (r[6] && r[0]);
            if !l_corner {
                continue;
            }
            let count = r.iter().filter(|&&v| v).count();
            if count >= 2 && ring_single_group(&r) {
                m.bits[y * m.width + x] = false;
            }
        }
    }
}
