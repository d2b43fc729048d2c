use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MarkerError;

/// Built-in dictionary: 4×4 bits, 1-cell border, 50 codes.
pub const BUILTIN_FAMILY: &str = include_str!("../../data/family_4x4_50.txt");

pub const BUILTIN_SEED: u64 = 42;

/// A square-tag dictionary.
///
/// Codes are `g²` bits, row-major with row 0 at the top of the tag (marker
/// +y) and column 0 at the left (marker −x). A set bit is a white cell. The
/// tag is `g + 2·border` cells wide; border cells are black.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagFamily {
    pub grid: usize,
    pub border: usize,
    pub codes: Vec<u64>,
}

impl TagFamily {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_FAMILY, 1).expect("built-in family is valid")
    }

    /// Cells per side, border included.
    pub fn total_cells(&self) -> usize {
        self.grid + 2 * self.border
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Parses one bit string per line; `#` starts a comment.
    pub fn parse(text: &str, border: usize) -> Result<Self, MarkerError> {
        let mut codes = Vec::new();
        let mut grid = None;
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let n = line.len();
            let g = (n as f64).sqrt().round() as usize;
            if g * g != n || g > 8 || !line.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(MarkerError::FamilyFormat(format!("line {}: expected a square bit string", no + 1)));
            }
            if *grid.get_or_insert(g) != g {
                return Err(MarkerError::FamilyFormat(format!("line {}: inconsistent code length", no + 1)));
            }
            let code = line.bytes().enumerate().fold(0u64, |c, (k, b)| c | (u64::from(b == b'1') << k));
            codes.push(code);
        }
        let grid = grid.ok_or_else(|| MarkerError::FamilyFormat("no codes".into()))?;
        Ok(Self { grid, border, codes })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# {g}x{g} tag family, {n} codes, border {b}\n# row-major, row 0 at the top, 1 = white\n",
            g = self.grid,
            n = self.codes.len(),
            b = self.border
        );
        for &c in &self.codes {
            s.extend((0..self.grid * self.grid).map(|k| if c >> k & 1 == 1 { '1' } else { '0' }));
            s.push('\n');
        }
        s
    }

    pub fn bit(&self, code: u64, row: usize, col: usize) -> bool {
        code >> (row * self.grid + col) & 1 == 1
    }

    /// Whether the cell at `(row, col)` of the full tag (border included) is white.
    pub fn cell_is_white(&self, id: usize, row: usize, col: usize) -> bool {
        let (b, g) = (self.border, self.grid);
        if row < b || col < b || row >= b + g || col >= b + g {
            return false;
        }
        self.bit(self.codes[id], row - b, col - b)
    }

    /// Color at marker-frame coordinates `(x, y)` for a tag of side `side`;
    /// `None` outside the tag.
    pub fn white_at(&self, id: usize, side: f64, x: f64, y: f64) -> Option<bool> {
        let half = 0.5 * side;
        if x < -half || x > half || y < -half || y > half {
            return None;
        }
        let n = self.total_cells();
        let cell = side / n as f64;
        let col = (((x + half) / cell).floor() as usize).min(n - 1);
        let row = (((half - y) / cell).floor() as usize).min(n - 1);
        Some(self.cell_is_white(id, row, col))
    }

    /// Minimum Hamming distance over the 4 rotations and 4 mirrored rotations.
    pub fn dihedral_distance(&self, a: u64, b: u64) -> u32 {
        dihedral(a, self.grid).iter().map(|t| (t ^ b).count_ones()).min().unwrap_or(0)
    }

    /// Minimum pairwise dihedral distance, also counting each code against its
    /// own non-trivial transforms.
    pub fn min_distance(&self) -> u32 {
        let mut best = u32::MAX;
        for (i, &a) in self.codes.iter().enumerate() {
            let t = dihedral(a, self.grid);
            best = best.min(t[1..].iter().map(|x| (x ^ a).count_ones()).min().unwrap_or(u32::MAX));
            for &b in &self.codes[i + 1..] {
                best = best.min(self.dihedral_distance(a, b));
            }
        }
        best
    }

    /// Greedy random search: draws codes from a seeded stream and keeps those
    /// at dihedral distance ≥ `min_dist` from every kept code and from their
    /// own rotations/mirrors. Codes with very few or very many white cells are
    /// skipped.
    pub fn generate(grid: usize, count: usize, min_dist: u32, seed: u64) -> Self {
        assert!((2..=8).contains(&grid));
        let bits = grid * grid;
        let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut codes: Vec<u64> = Vec::new();
        let mut family = Self { grid, border: 1, codes: Vec::new() };
        let (lo, hi) = (bits as u32 / 5, bits as u32 - bits as u32 / 5);
        for _ in 0..1_000_000 {
            if codes.len() == count {
                break;
            }
            let c = rng.random::<u64>() & mask;
            if !(lo..=hi).contains(&c.count_ones()) {
                continue;
            }
            let t = dihedral(c, grid);
            if t[1..].iter().any(|x| (x ^ c).count_ones() < min_dist) {
                continue;
            }
            if codes.iter().all(|&d| family.dihedral_distance(c, d) >= min_dist) {
                codes.push(c);
                family.codes = codes.clone();
            }
        }
        family.codes = codes;
        family
    }
}

/// Code rotated a quarter turn: the cell at the top-left moves to the top-right.
pub fn rotate90(code: u64, g: usize) -> u64 {
    let mut out = 0;
    for r in 0..g {
        for c in 0..g {
            if code >> (r * g + c) & 1 == 1 {
                out |= 1 << (c * g + (g - 1 - r));
            }
        }
    }
    out
}

/// Left–right mirror.
pub fn mirror(code: u64, g: usize) -> u64 {
    let mut out = 0;
    for r in 0..g {
        for c in 0..g {
            if code >> (r * g + c) & 1 == 1 {
                out |= 1 << (r * g + (g - 1 - c));
            }
        }
    }
    out
}

/// The 8 dihedral images; index 0 is the identity, 1..4 rotations, 4..8 mirrored.
pub fn dihedral(code: u64, g: usize) -> [u64; 8] {
    let mut out = [0; 8];
    let mut c = code;
    for k in 0..4 {
        out[k] = c;
        out[k + 4] = mirror(c, g);
        c = rotate90(c, g);
    }
    out
}
