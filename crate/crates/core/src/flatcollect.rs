//! Collections of flats: the partition cost `min_P Σ dim join(block)`, the
//! non-concentration test, minimality, and the search for a minimal
//! subfamily of a non-minimal collection.

use thiserror::Error;

use crate::flats::{join_dim, AffineFlat, FlatError};

/// Largest collection whose partitions are enumerated (Bell(12) ≈ 4.2M).
pub const MAX_PARTITION_FLATS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CollectError {
    #[error("partition space too large: {m} flats (cap {cap})")]
    TooLarge { m: usize, cap: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("collection is not non-concentrated (cost {cost} < {n})")]
    NotNc { cost: usize, n: usize },
    #[error(transparent)]
    Flat(#[from] FlatError),
}

/// Set partition of `0..m`, blocks sorted by least element, elements ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(mut blocks: Vec<Vec<usize>>, m: usize) -> Result<Self, CollectError> {
        let mut seen = vec![false; m];
        for b in &mut blocks {
            if b.is_empty() {
                return Err(CollectError::InvalidPartition("empty block".into()));
            }
            b.sort_unstable();
            for &i in b.iter() {
                if i >= m {
                    return Err(CollectError::InvalidPartition(format!("index {i} out of range 0..{m}")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(CollectError::InvalidPartition(format!("index {i} repeated")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(CollectError::InvalidPartition(format!("index {i} not covered")));
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Ok(Partition { blocks })
    }

    /// All singletons.
    pub fn discrete(m: usize) -> Self {
        Partition { blocks: (0..m).map(|i| vec![i]).collect() }
    }

    fn from_rgs(rgs: &[usize]) -> Self {
        let k = rgs.iter().max().map_or(0, |&x| x + 1);
        let mut blocks = vec![Vec::new(); k];
        for (i, &b) in rgs.iter().enumerate() {
            blocks[b].push(i);
        }
        Partition { blocks }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Result of minimising the partition cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub cost: usize,
    /// Number of partitions attaining the minimum.
    pub n_count: usize,
    /// Minimisers in restricted-growth-string order; the first is the
    /// lexicographically least.
    pub minimizers: Vec<Partition>,
}

impl CostReport {
    pub fn least_minimizer(&self) -> &Partition {
        &self.minimizers[0]
    }
}

fn subset_flats(v: &[AffineFlat], mask: usize) -> Vec<&AffineFlat> {
    (0..v.len()).filter(|i| mask >> i & 1 == 1).map(|i| &v[i]).collect()
}

/// `dim join(V_J)` for every nonempty mask `J`; index 0 is unused.
fn join_dims(v: &[AffineFlat]) -> Result<Vec<usize>, FlatError> {
    let mut dims = vec![0; 1 << v.len()];
    for (mask, d) in dims.iter_mut().enumerate().skip(1) {
        *d = join_dim(&subset_flats(v, mask))?;
    }
    Ok(dims)
}

/// `Σ_blocks dim join(block)`.
pub fn cost_of(v: &[AffineFlat], parts: &Partition) -> Result<usize, CollectError> {
    let mut total = 0;
    for b in &parts.blocks {
        if b.iter().any(|&i| i >= v.len()) {
            return Err(CollectError::InvalidPartition("block index out of range".into()));
        }
        let fs: Vec<&AffineFlat> = b.iter().map(|&i| &v[i]).collect();
        total += join_dim(&fs)?;
    }
    Ok(total)
}

/// Minimum of the partition cost over all set partitions, with the count and
/// list of minimisers. The empty collection has cost 0.
pub fn partition_cost(v: &[AffineFlat]) -> Result<CostReport, CollectError> {
    let m = v.len();
    if m > MAX_PARTITION_FLATS {
        return Err(CollectError::TooLarge { m, cap: MAX_PARTITION_FLATS });
    }
    if m == 0 {
        return Ok(CostReport { cost: 0, n_count: 1, minimizers: vec![Partition { blocks: vec![] }] });
    }
    let dims = join_dims(v)?;

    // restricted growth strings in lexicographic order
    let mut a = vec![0usize; m];
    let mut mx = vec![0usize; m]; // mx[i] = max(a[0..i])
    let mut best = usize::MAX;
    let mut mins: Vec<Vec<usize>> = Vec::new();
    let mut masks = vec![0usize; m];
    loop {
        masks.iter_mut().for_each(|x| *x = 0);
        for (i, &b) in a.iter().enumerate() {
            masks[b] |= 1 << i;
        }
        let cost: usize = masks.iter().filter(|&&x| x != 0).map(|&x| dims[x]).sum();
        if cost < best {
            best = cost;
            mins.clear();
        }
        if cost == best {
            mins.push(a.clone());
        }
        // next RGS
        let mut i = m - 1;
        loop {
            if i == 0 {
                let minimizers: Vec<Partition> = mins.iter().map(|r| Partition::from_rgs(r)).collect();
                return Ok(CostReport { cost: best, n_count: minimizers.len(), minimizers });
            }
            if a[i] <= mx[i] {
                a[i] += 1;
                for j in i + 1..m {
                    a[j] = 0;
                    mx[j] = mx[j - 1].max(a[j - 1]);
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Non-concentrated in `Q^n`: every partition has cost at least `n`.
pub fn is_nc(v: &[AffineFlat], n: usize) -> Result<bool, CollectError> {
    Ok(partition_cost(v)?.cost >= n)
}

fn minimal_with_top(v: &[AffineFlat], top: usize) -> Result<bool, FlatError> {
    if v.is_empty() {
        return Ok(false);
    }
    let dims = join_dims(v)?;
    let full = (1usize << v.len()) - 1;
    let sum = |mask: usize| -> usize { (0..v.len()).filter(|i| mask >> i & 1 == 1).map(|i| v[i].dim()).sum() };
    if dims[full] != top || top > sum(full) {
        return Ok(false);
    }
    Ok((1..full).all(|mask| dims[mask] >= sum(mask)))
}

/// Minimal in the ambient space: the join is all of `Q^n`, `n ≤ Σ dim F_j`,
/// and every proper subfamily has `dim F_J ≥ Σ_{j∈J} dim F_j`.
pub fn is_minimal(v: &[AffineFlat]) -> Result<bool, CollectError> {
    let Some(first) = v.first() else { return Ok(false) };
    Ok(minimal_with_top(v, first.ambient_dim())?)
}

/// Minimal inside its own join.
pub fn is_minimal_within_span(v: &[AffineFlat]) -> Result<bool, CollectError> {
    if v.is_empty() {
        return Ok(false);
    }
    let refs: Vec<&AffineFlat> = v.iter().collect();
    let top = join_dim(&refs)?;
    Ok(minimal_with_top(v, top)?)
}

/// Given a partition `J_1..J_t` of an NC collection `v`, returns `[0..t)` if
/// the joined collection `W_i = join(V_{J_i})` is minimal, and otherwise an
/// inclusion-minimal `I` with `dim W_I < Σ_{i∈I} dim W_i`; `(W_i)_{i∈I}` is
/// then minimal inside its span.
pub fn find_minimal_subfamily(parts: &Partition, v: &[AffineFlat]) -> Result<Vec<usize>, CollectError> {
    let n = v.first().map_or(0, AffineFlat::ambient_dim);
    let c = partition_cost(v)?;
    if c.cost < n {
        return Err(CollectError::NotNc { cost: c.cost, n });
    }
    let m = v.len();
    for b in &parts.blocks {
        if b.iter().any(|&i| i >= m) {
            return Err(CollectError::InvalidPartition("block index out of range".into()));
        }
    }
    Partition::new(parts.blocks.clone(), m)?;
    let w: Vec<AffineFlat> = parts
        .blocks
        .iter()
        .map(|b| crate::flats::join(&b.iter().map(|&i| &v[i]).collect::<Vec<_>>()))
        .collect::<Result<_, _>>()?;
    if is_minimal(&w)? {
        return Ok((0..w.len()).collect());
    }
    let t = w.len();
    // smallest violating subset first: it is automatically inclusion-minimal
    let mut masks: Vec<usize> = (1..1usize << t).collect();
    masks.sort_by_key(|x| (x.count_ones(), *x));
    for mask in masks {
        let fs = subset_flats(&w, mask);
        let s: usize = fs.iter().map(|f| f.dim()).sum();
        if join_dim(&fs)? < s {
            return Ok((0..t).filter(|i| mask >> i & 1 == 1).collect());
        }
    }
    // NC rules out the only other failure mode (join too big); unreachable in
    // exact arithmetic but reported rather than asserted.
    Err(CollectError::InvalidPartition("no violating subfamily found".into()))
}
