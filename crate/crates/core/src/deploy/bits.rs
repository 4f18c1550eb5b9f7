use crate::error::{LdcError, Result};

/// Row-major bit matrix; a set bit stands for `+1`, a clear bit for `-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64);
        BitMatrix {
            rows,
            cols,
            words,
            data: vec![0; rows * words],
        }
    }

    pub fn from_signs(rows: usize, cols: usize, signs: &[i8]) -> Result<Self> {
        if signs.len() != rows * cols {
            return Err(LdcError::Shape(format!("{} signs for a {rows}x{cols} bit matrix", signs.len())));
        }
        let mut m = BitMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if signs[r * cols + c] > 0 {
                    m.set(r, c, true);
                }
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.words + c / 64] >> (c % 64) & 1 == 1
    }

    pub fn sign(&self, r: usize, c: usize) -> i8 {
        if self.get(r, c) {
            1
        } else {
            -1
        }
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        let w = &mut self.data[r * self.words + c / 64];
        if v {
            *w |= 1 << (c % 64);
        } else {
            *w &= !(1 << (c % 64));
        }
    }

    pub fn toggle(&mut self, r: usize, c: usize) {
        self.data[r * self.words + c / 64] ^= 1 << (c % 64);
    }

    /// Packed words of row `r`; bits past `cols` are zero.
    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.words..(r + 1) * self.words]
    }

    pub fn to_signs(&self) -> Vec<i8> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(self.sign(r, c));
            }
        }
        out
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    t.set(c, r, true);
                }
            }
        }
        t
    }

    pub fn bytes_per_row(&self) -> usize {
        self.cols.div_ceil(8)
    }

    /// Rows padded to whole bytes, bit `c` of a row at bit `c % 8` of byte `c / 8`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let bpr = self.bytes_per_row();
        let mut out = Vec::with_capacity(self.rows * bpr);
        for r in 0..self.rows {
            let row = self.row(r);
            out.extend((0..bpr).map(|b| (row[b / 8] >> (8 * (b % 8))) as u8));
        }
        out
    }

    pub fn from_bytes(rows: usize, cols: usize, bytes: &[u8]) -> Result<Self> {
        let mut m = BitMatrix::zeros(rows, cols);
        let bpr = m.bytes_per_row();
        if bytes.len() != rows * bpr {
            return Err(LdcError::Format(format!("{} bytes for a {rows}x{cols} bit matrix", bytes.len())));
        }
        for r in 0..rows {
            for c in 0..cols {
                if bytes[r * bpr + c / 8] >> (c % 8) & 1 == 1 {
                    m.set(r, c, true);
                }
            }
            let tail = cols % 8;
            if tail != 0 && bytes[r * bpr + bpr - 1] >> tail != 0 {
                return Err(LdcError::Format("nonzero padding bits".into()));
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip_with_padding() {
        let signs: Vec<i8> = (0..3 * 70).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let m = BitMatrix::from_signs(3, 70, &signs).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(bytes.len(), 3 * 9);
        assert_eq!(BitMatrix::from_bytes(3, 70, &bytes).unwrap(), m);
        assert_eq!(m.to_signs(), signs);
        assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn lsb_first_layout() {
        let m = BitMatrix::from_signs(1, 10, &[1, -1, -1, -1, -1, -1, -1, -1, -1, 1]).unwrap();
        assert_eq!(m.to_bytes(), vec![0b0000_0001, 0b0000_0010]);
    }
}
