/// Spin `i` of basis index `index`: +1 for a clear bit, -1 for a set bit.
#[inline]
pub(crate) fn spin(index: usize, i: usize) -> f64 {
    if index >> i & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinConfiguration {
    pub spins: Vec<i8>,
}

impl SpinConfiguration {
    pub fn from_index(index: usize, n: usize) -> Self {
        Self {
            spins: (0..n).map(|i| spin(index, i) as i8).collect(),
        }
    }

    pub fn index(&self) -> usize {
        self.spins
            .iter()
            .enumerate()
            .filter(|(_, s)| **s < 0)
            .fold(0, |acc, (i, _)| acc | 1 << i)
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }
}
