//! Write/read schemes that realize each transformation as a pure change of
//! access order on the banked array.
//!
//! Every element `T(m, n)` is assigned logical coordinates `(x, y, k, z)`:
//!
//! ```text
//! Type I    x = b1   y = a    k = 0             z = b2
//! Type II   x = a2   y = a1   k = a3*B1 + b1    z = b2
//! Type III  x = a2   y = a1   k = a3            z = b
//! ```
//!
//! A read cycle fetches `(y, k)` from every bank at once. For each type the
//! words fetched in one cycle are exactly a block of `T'`, so nothing is
//! discarded and no bank is asked for two rows.
//!
//! A logical row of `Z` words occupies `ZT = ceil(Z / wordsPerRow)` physical
//! rows. When `X > G` or the segments of all `y` do not fit in `M` rows, the
//! work is split into passes (y-chunk outer, bank group inner). Addresses
//! restart at zero in every pass.

use super::{AccessEvent, HwConfig, Op, SimError};
use crate::tensor::MatrixView;
use crate::transform::TransformSpec;

/// Logical extents of a placement and its tiling on a given array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub spec: TransformSpec,
    pub x: usize,
    pub y: usize,
    /// Segment depth `D` in logical rows.
    pub k: usize,
    pub z: usize,
    /// Physical rows per logical row.
    pub z_tiles: usize,
    pub words_per_row: usize,
    /// Segment depth in physical rows.
    pub segment_rows: usize,
    /// Segments per bank, `floor(M / segment_rows)`.
    pub segments: usize,
    pub y_per_pass: usize,
    pub y_chunks: usize,
    pub bank_groups: usize,
    pub banks: usize,
}

impl Placement {
    pub fn new(spec: &TransformSpec, hw: &HwConfig) -> Result<Self, SimError> {
        spec.validate()?;
        hw.validate()?;
        let (x, y, k, z) = match *spec {
            TransformSpec::TypeI { a, b1, b2 } => (b1, a, 1, b2),
            TransformSpec::TypeII { a1, a2, a3, b1, b2 } => (a2, a1, a3 * b1, b2),
            TransformSpec::TypeIII { a1, a2, a3, b } => (a2, a1, a3, b),
        };
        let wpr = hw.words_per_row();
        let z_tiles = z.div_ceil(wpr);
        let segment_rows = k * z_tiles;
        if segment_rows > hw.depth {
            return Err(SimError::Capacity {
                needed: segment_rows,
                available: hw.depth,
            });
        }
        let segments = hw.depth / segment_rows;
        let y_per_pass = segments.min(y);
        Ok(Self {
            spec: *spec,
            x,
            y,
            k,
            z,
            z_tiles,
            words_per_row: wpr,
            segment_rows,
            segments,
            y_per_pass,
            y_chunks: y.div_ceil(y_per_pass),
            bank_groups: x.div_ceil(hw.banks),
            banks: hw.banks,
        })
    }

    pub fn passes(&self) -> usize {
        self.y_chunks * self.bank_groups
    }

    /// `T(m, n)`, zero-based, to `(x, y, k, z)`.
    pub fn coords(&self, m: usize, n: usize) -> (usize, usize, usize, usize) {
        match self.spec {
            TransformSpec::TypeI { b2, .. } => (n / b2, m, 0, n % b2),
            TransformSpec::TypeII { a2, a3, b1, b2, .. } => {
                let (a1i, a2i, a3i) = (m / (a2 * a3), m / a3 % a2, m % a3);
                (a2i, a1i, a3i * b1 + n / b2, n % b2)
            }
            TransformSpec::TypeIII { a2, a3, .. } => (m / a3 % a2, m / (a2 * a3), m % a3, n),
        }
    }

    /// Inverse of [`Placement::coords`].
    pub fn source(&self, x: usize, y: usize, k: usize, z: usize) -> (usize, usize) {
        match self.spec {
            TransformSpec::TypeI { b2, .. } => (y, x * b2 + z),
            TransformSpec::TypeII { a2, a3, b1, b2, .. } => {
                ((y * a2 + x) * a3 + k / b1, (k % b1) * b2 + z)
            }
            TransformSpec::TypeIII { a2, a3, .. } => ((y * a2 + x) * a3 + k, z),
        }
    }

    /// Where a stored word lands in `T'`, zero-based.
    pub fn dest(&self, x: usize, y: usize, k: usize, z: usize) -> (usize, usize) {
        match self.spec {
            TransformSpec::TypeI { b1, .. } => (y * b1 + x, z),
            TransformSpec::TypeII { b2, .. } => (y * self.k + k, x * b2 + z),
            TransformSpec::TypeIII { b, .. } => ((y * self.k + k) * b + z, x),
        }
    }

    fn pass_bounds(&self, pass: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (yc, xg) = (pass / self.bank_groups, pass % self.bank_groups);
        let y0 = yc * self.y_per_pass;
        let x0 = xg * self.banks;
        (
            y0..(y0 + self.y_per_pass).min(self.y),
            x0..(x0 + self.banks).min(self.x),
        )
    }

    fn row_address(&self, y_local: usize, k: usize, zt: usize) -> usize {
        (y_local * self.k + k) * self.z_tiles + zt
    }

    fn tile_words(&self, zt: usize) -> std::ops::Range<usize> {
        zt * self.words_per_row..((zt + 1) * self.words_per_row).min(self.z)
    }

    /// Logical rows `(x, k)` filled by one row of `T`, for a fixed `y`.
    fn rows_of(&self, m: usize) -> (usize, Vec<(usize, usize)>) {
        match self.spec {
            TransformSpec::TypeI { b1, .. } => (m, (0..b1).map(|x| (x, 0)).collect()),
            TransformSpec::TypeII { a2, a3, b1, .. } => {
                let (y, x, a3i) = (m / (a2 * a3), m / a3 % a2, m % a3);
                (y, (0..b1).map(|b| (x, a3i * b1 + b)).collect())
            }
            TransformSpec::TypeIII { a2, a3, .. } => (m / (a2 * a3), vec![(m / a3 % a2, m % a3)]),
        }
    }
}

/// Contents of one copy of the working memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SramArrayState {
    banks: usize,
    depth: usize,
    words_per_row: usize,
    cells: Vec<Option<f64>>,
}

impl SramArrayState {
    pub fn new(hw: &HwConfig) -> Self {
        let wpr = hw.words_per_row();
        Self {
            banks: hw.banks,
            depth: hw.depth,
            words_per_row: wpr,
            cells: vec![None; hw.banks * hw.depth * wpr],
        }
    }

    fn slot(&self, bank: usize, row: usize, word: usize) -> usize {
        (bank * self.depth + row) * self.words_per_row + word
    }

    pub fn banks(&self) -> usize {
        self.banks
    }

    pub fn word(&self, bank: usize, row: usize, word: usize) -> Option<f64> {
        self.cells[self.slot(bank, row, word)]
    }

    /// Stored value at segment coordinates, with `(y - 1) * D + k` rows
    /// (zero-based here) and `wordsPerRow`-wide tiles.
    pub fn logical(&self, p: &Placement, x: usize, y: usize, k: usize, z: usize) -> Option<f64> {
        let row = p.row_address(y, k, z / p.words_per_row);
        self.word(x, row, z % p.words_per_row)
    }

    fn set(&mut self, bank: usize, row: usize, word: usize, v: f64) {
        let i = self.slot(bank, row, word);
        self.cells[i] = Some(v);
    }

    fn clear(&mut self) {
        self.cells.iter_mut().for_each(|c| *c = None);
    }

    pub fn written_words(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
}

/// Words of `T'` delivered by one read cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub cycle: u64,
    pub entries: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRun {
    pub output: Option<MatrixView>,
    pub trace: Vec<AccessEvent>,
    pub write_cycles: u64,
    pub read_cycles: u64,
    pub passes: usize,
    pub peak_buffer_bytes: usize,
    /// Largest footprint of any single pass, in bytes.
    pub bytes_touched: usize,
}

fn check_input(spec: &TransformSpec, t: &MatrixView) -> Result<(), SimError> {
    let expected = spec.input_shape();
    let found = (t.rows(), t.cols());
    if expected != found {
        return Err(crate::transform::TransformError::Shape { expected, found }.into());
    }
    Ok(())
}

fn write_pass(
    p: &Placement,
    pass: usize,
    data: Option<&MatrixView>,
    state: &mut Option<SramArrayState>,
    cycle: &mut u64,
    sink: &mut dyn FnMut(AccessEvent),
) {
    let (yr, xr) = p.pass_bounds(pass);
    let rows = p.spec.input_shape().0;
    for m in 0..rows {
        let (y, logical) = p.rows_of(m);
        if !yr.contains(&y) {
            continue;
        }
        // per bank, the logical rows this T row fills
        let mut per_bank: Vec<Vec<usize>> = vec![Vec::new(); xr.len()];
        for (x, k) in logical {
            if xr.contains(&x) {
                per_bank[x - xr.start].push(k);
            }
        }
        let slots = per_bank.iter().map(Vec::len).max().unwrap_or(0);
        for j in 0..slots {
            for zt in 0..p.z_tiles {
                for (b, ks) in per_bank.iter().enumerate() {
                    let Some(&k) = ks.get(j) else { continue };
                    let row = p.row_address(y - yr.start, k, zt);
                    let words: Vec<usize> = p.tile_words(zt).map(|z| z % p.words_per_row).collect();
                    if let (Some(t), Some(s)) = (data, state.as_mut()) {
                        for z in p.tile_words(zt) {
                            let (mi, ni) = p.source(xr.start + b, y, k, z);
                            s.set(b, row, z % p.words_per_row, t.get(mi, ni));
                        }
                    }
                    sink(AccessEvent {
                        cycle: *cycle,
                        bank: b,
                        row,
                        op: Op::Write,
                        words,
                        discarded: Vec::new(),
                        pass,
                    });
                }
                *cycle += 1;
            }
        }
    }
}

fn read_pass(
    p: &Placement,
    pass: usize,
    state: Option<&SramArrayState>,
    cycle: &mut u64,
    sink: &mut dyn FnMut(AccessEvent),
    emit: &mut dyn FnMut(Fragment),
) -> Result<(), SimError> {
    let (yr, xr) = p.pass_bounds(pass);
    for y in yr.clone() {
        for k in 0..p.k {
            for zt in 0..p.z_tiles {
                let mut entries = Vec::new();
                for b in 0..xr.len() {
                    let row = p.row_address(y - yr.start, k, zt);
                    let words: Vec<usize> = p.tile_words(zt).map(|z| z % p.words_per_row).collect();
                    if let Some(s) = state {
                        for z in p.tile_words(zt) {
                            let v = s
                                .word(b, row, z % p.words_per_row)
                                .ok_or(SimError::UnwrittenRead { bank: b, row })?;
                            let (pi, qi) = p.dest(xr.start + b, y, k, z);
                            entries.push((pi, qi, v));
                        }
                    }
                    sink(AccessEvent {
                        cycle: *cycle,
                        bank: b,
                        row,
                        op: Op::Read,
                        words,
                        discarded: Vec::new(),
                        pass,
                    });
                }
                if state.is_some() {
                    emit(Fragment {
                        cycle: *cycle,
                        entries,
                    });
                }
                *cycle += 1;
            }
        }
    }
    Ok(())
}

fn single_pass(spec: &TransformSpec, hw: &HwConfig) -> Result<Placement, SimError> {
    let words = spec.len();
    let available = hw.banks * hw.depth * hw.words_per_row();
    if words > available {
        return Err(SimError::Capacity {
            needed: words,
            available,
        });
    }
    let p = Placement::new(spec, hw)?;
    if p.passes() != 1 {
        return Err(SimError::Config(format!(
            "geometry infeasible in one pass ({} passes needed)",
            p.passes()
        )));
    }
    Ok(p)
}

/// Writes `t` in the layout of `spec`. Fails without touching any state when
/// the data cannot be laid out in a single pass.
pub fn write_scheme(
    hw: &HwConfig,
    spec: &TransformSpec,
    t: &MatrixView,
) -> Result<(SramArrayState, Vec<AccessEvent>), SimError> {
    check_input(spec, t)?;
    let p = single_pass(spec, hw)?;
    let mut state = Some(SramArrayState::new(hw));
    let mut trace = Vec::new();
    let mut cycle = 0;
    write_pass(&p, 0, Some(t), &mut state, &mut cycle, &mut |e| trace.push(e));
    Ok((state.unwrap(), trace))
}

/// Reads a state written by [`write_scheme`], returning the fragments of
/// `T'` in stream order.
pub fn read_scheme(
    hw: &HwConfig,
    spec: &TransformSpec,
    state: &SramArrayState,
) -> Result<(Vec<Fragment>, Vec<AccessEvent>), SimError> {
    let p = single_pass(spec, hw)?;
    let mut trace = Vec::new();
    let mut frags = Vec::new();
    let mut cycle = 0;
    read_pass(
        &p,
        0,
        Some(state),
        &mut cycle,
        &mut |e| trace.push(e),
        &mut |f| frags.push(f),
    )?;
    Ok((frags, trace))
}

pub fn write_basic(
    hw: &HwConfig,
    t: &MatrixView,
    a1: usize,
    a2: usize,
    b1: usize,
    b2: usize,
) -> Result<(SramArrayState, Vec<AccessEvent>), SimError> {
    write_scheme(hw, &TransformSpec::basic(a1, a2, b1, b2), t)
}

pub fn read_basic(
    hw: &HwConfig,
    state: &SramArrayState,
    a1: usize,
    a2: usize,
    b1: usize,
    b2: usize,
) -> Result<(Vec<Fragment>, Vec<AccessEvent>), SimError> {
    read_scheme(hw, &TransformSpec::basic(a1, a2, b1, b2), state)
}

/// Places fragments into a `T'`-shaped matrix.
pub fn assemble(spec: &TransformSpec, frags: &[Fragment]) -> Result<MatrixView, SimError> {
    let (r, c) = spec.output_shape();
    let mut out = MatrixView::zeros(r, c).map_err(|e| SimError::Config(e.to_string()))?;
    for f in frags {
        for &(p, q, v) in &f.entries {
            out.set(p, q, v);
        }
    }
    Ok(out)
}

/// Runs every pass of a transformation. With `data`, values are moved
/// through the array and the assembled `T'` is returned; without it only
/// the access pattern and cycle counts are produced.
pub fn execute(
    hw: &HwConfig,
    spec: &TransformSpec,
    data: Option<&MatrixView>,
    keep_trace: bool,
) -> Result<SchemeRun, SimError> {
    if let Some(t) = data {
        check_input(spec, t)?;
    }
    let p = Placement::new(spec, hw)?;
    let mut state = data.map(|_| SramArrayState::new(hw));
    let mut out = match data {
        Some(_) => {
            let (r, c) = spec.output_shape();
            Some(MatrixView::zeros(r, c).map_err(|e| SimError::Config(e.to_string()))?)
        }
        None => None,
    };
    let mut trace = Vec::new();
    let mut read_words = 0usize;
    let mut read_cycle_words: (u64, usize) = (u64::MAX, 0);
    let mut peak_words = 0usize;
    let mut cycle = 0u64;
    let mut write_cycles = 0;
    let mut read_cycles = 0;
    let mut bytes_touched = 0;
    let row_bytes = hw.width_bits / 8;
    for pass in 0..p.passes() {
        let (yr, xr) = p.pass_bounds(pass);
        bytes_touched = bytes_touched.max(yr.len() * p.segment_rows * xr.len() * row_bytes);
        if let Some(s) = state.as_mut() {
            s.clear();
        }
        let start = cycle;
        write_pass(&p, pass, data, &mut state, &mut cycle, &mut |e| {
            if keep_trace {
                trace.push(e);
            }
        });
        write_cycles += cycle - start;
        let start = cycle;
        let mut sink = |e: AccessEvent| {
            if read_cycle_words.0 != e.cycle {
                read_cycle_words = (e.cycle, 0);
            }
            read_cycle_words.1 += e.words.len();
            peak_words = peak_words.max(read_cycle_words.1);
            read_words += e.words.len();
            if keep_trace {
                trace.push(e);
            }
        };
        let mut emit = |f: Fragment| {
            if let Some(o) = out.as_mut() {
                for (pi, qi, v) in f.entries {
                    o.set(pi, qi, v);
                }
            }
        };
        read_pass(&p, pass, state.as_ref(), &mut cycle, &mut sink, &mut emit)?;
        read_cycles += cycle - start;
    }
    debug_assert_eq!(read_words, spec.len());
    Ok(SchemeRun {
        output: out,
        trace,
        write_cycles,
        read_cycles,
        passes: p.passes(),
        peak_buffer_bytes: peak_words * hw.word_bytes(),
        bytes_touched,
    })
}

/// The naive layout: `T` row-major in one wide bank, one row of `T` per
/// address, and each row of `T'` fetched in a single cycle. Rows of `T'`
/// that draw on several rows of `T` hit one port with several addresses.
pub fn conventional_trace(spec: &TransformSpec) -> Result<Vec<AccessEvent>, SimError> {
    spec.validate()?;
    let (rows, cols) = spec.input_shape();
    let (out_rows, out_cols) = spec.output_shape();
    let mut trace = Vec::new();
    for m in 0..rows {
        trace.push(AccessEvent {
            cycle: m as u64,
            bank: 0,
            row: m,
            op: Op::Write,
            words: (0..cols).collect(),
            discarded: Vec::new(),
            pass: 0,
        });
    }
    for pi in 0..out_rows {
        // source rows needed for this output row, with the columns used
        let mut needed: Vec<(usize, Vec<usize>)> = Vec::new();
        for qi in 0..out_cols {
            let (m, n) = spec.inverse(pi + 1, qi + 1);
            let (m, n) = (m - 1, n - 1);
            match needed.iter_mut().find(|(r, _)| *r == m) {
                Some((_, ns)) => ns.push(n),
                None => needed.push((m, vec![n])),
            }
        }
        for (m, mut ns) in needed {
            ns.sort_unstable();
            let discarded = (0..cols).filter(|n| !ns.contains(n)).collect();
            trace.push(AccessEvent {
                cycle: (rows + pi) as u64,
                bank: 0,
                row: m,
                op: Op::Read,
                words: ns,
                discarded,
                pass: 0,
            });
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{assemble_buffer_usage, check_conflicts, check_monotone};
    use crate::transform::oracle_transform;

    fn hw(banks: usize, depth: usize, words: usize) -> HwConfig {
        HwConfig {
            banks,
            width_bits: 16 * words,
            depth,
            word_bits: 16,
            num_pe: 1,
            macs_per_pe: 1,
            freq_mhz: 1.0,
        }
    }

    fn iota(spec: &TransformSpec) -> MatrixView {
        let (r, c) = spec.input_shape();
        MatrixView::new(r, c, (0..r * c).map(|v| v as f64 + 1.0).collect()).unwrap()
    }

    fn round_trip(hw: &HwConfig, spec: TransformSpec) -> (Vec<Fragment>, Vec<AccessEvent>) {
        let t = iota(&spec);
        let (state, mut trace) = write_scheme(hw, &spec, &t).unwrap();
        let (frags, reads) = read_scheme(hw, &spec, &state).unwrap();
        assert_eq!(assemble(&spec, &frags).unwrap(), oracle_transform(&spec, &t).unwrap());
        trace.extend(reads.iter().cloned());
        assert!(check_conflicts(&trace).ok);
        assert!(check_monotone(&trace).is_ok());
        (frags, reads)
    }

    #[test]
    fn basic_example_layout() {
        let hw = hw(2, 4, 2);
        let t = iota(&TransformSpec::basic(2, 2, 2, 2));
        let (state, trace) = write_basic(&hw, &t, 2, 2, 2, 2).unwrap();
        let p = Placement::new(&TransformSpec::basic(2, 2, 2, 2), &hw).unwrap();
        assert_eq!((p.k, p.segments), (2, 2));
        // M(1,1..2) -> S(1,1,1,:), M(1,3..4) -> S(1,1,2,:)
        assert_eq!(state.logical(&p, 0, 0, 0, 0), Some(1.0));
        assert_eq!(state.logical(&p, 0, 0, 0, 1), Some(2.0));
        assert_eq!(state.logical(&p, 0, 0, 1, 0), Some(3.0));
        assert_eq!(state.logical(&p, 0, 0, 1, 1), Some(4.0));
        // M(2,:) goes to the second bank, M(3,:) to the first bank's second segment
        assert_eq!(state.logical(&p, 1, 0, 0, 0), Some(5.0));
        assert_eq!(state.logical(&p, 0, 1, 0, 0), Some(9.0));
        assert_eq!(trace.len(), 8);
        let (frags, reads) = read_basic(&hw, &state, 2, 2, 2, 2).unwrap();
        // one full row of T' per cycle, rows in order
        assert_eq!(frags.len(), 4);
        for (i, f) in frags.iter().enumerate() {
            assert_eq!(f.entries.len(), 4);
            assert!(f.entries.iter().all(|&(p, _, _)| p == i));
        }
        assert_eq!(assemble_buffer_usage(&reads, 2), 8);
        round_trip(&hw, TransformSpec::basic(2, 2, 2, 2));
    }

    #[test]
    fn one_element() {
        let hw = hw(2, 4, 2);
        let spec = TransformSpec::basic(1, 1, 1, 1);
        let t = MatrixView::new(1, 1, vec![7.0]).unwrap();
        let (state, w) = write_scheme(&hw, &spec, &t).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].words.len(), 1);
        let (_, r) = read_scheme(&hw, &spec, &state).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(assemble_buffer_usage(&r, 2), 2);
    }

    #[test]
    fn capacity_is_checked_first() {
        let hw = hw(2, 4, 2);
        let spec = TransformSpec::basic(3, 2, 2, 2);
        let t = iota(&spec);
        assert!(matches!(write_scheme(&hw, &spec, &t), Err(SimError::Capacity { .. })));
        // fits in words but not in one pass
        let spec = TransformSpec::basic(1, 3, 1, 2);
        assert!(matches!(write_scheme(&hw, &spec, &iota(&spec)), Err(SimError::Config(_))));
    }

    #[test]
    fn unwritten_read_is_an_error() {
        let hw = hw(2, 4, 2);
        let empty = SramArrayState::new(&hw);
        assert!(matches!(
            read_basic(&hw, &empty, 2, 2, 2, 2),
            Err(SimError::UnwrittenRead { bank: 0, row: 0 })
        ));
    }

    #[test]
    fn type_i_macro_rows() {
        let hw = hw(4, 16, 2);
        let (frags, _) = round_trip(&hw, TransformSpec::TypeI { a: 3, b1: 3, b2: 2 });
        assert_eq!(frags.len(), 3);
        for (a, f) in frags.iter().enumerate() {
            let mut rows: Vec<usize> = f.entries.iter().map(|e| e.0).collect();
            rows.dedup();
            assert_eq!(rows, vec![3 * a, 3 * a + 1, 3 * a + 2]);
            assert_eq!(f.entries.len(), 6);
        }
    }

    #[test]
    fn type_ii_and_iii_examples() {
        let hw = hw(4, 16, 2);
        round_trip(&hw, TransformSpec::TypeII { a1: 2, a2: 3, a3: 1, b1: 3, b2: 2 });
        round_trip(&hw, TransformSpec::TypeII { a1: 2, a2: 3, a3: 3, b1: 1, b2: 2 });
        round_trip(&hw, TransformSpec::TypeIII { a1: 1, a2: 2, a3: 2, b: 2 });
    }

    #[test]
    fn tiled_execution_matches_oracle() {
        // 5 banks requested on 2, and a logical row of 5 words on 2-word rows
        let hw = hw(2, 16, 2);
        for spec in [
            TransformSpec::TypeII { a1: 3, a2: 5, a3: 2, b1: 2, b2: 5 },
            TransformSpec::TypeIII { a1: 4, a2: 5, a3: 2, b: 3 },
            TransformSpec::TypeI { a: 6, b1: 3, b2: 5 },
        ] {
            let t = iota(&spec);
            let run = execute(&hw, &spec, Some(&t), true).unwrap();
            assert!(run.passes > 1);
            assert_eq!(run.output.unwrap(), oracle_transform(&spec, &t).unwrap());
            assert!(check_conflicts(&run.trace).ok);
            assert!(check_monotone(&run.trace).is_ok());
            let dry = execute(&hw, &spec, None, false).unwrap();
            assert_eq!((dry.write_cycles, dry.read_cycles), (run.write_cycles, run.read_cycles));
            assert!(run.bytes_touched <= hw.copy_bytes());
        }
    }

    #[test]
    fn conventional_layout_conflicts() {
        let trace = conventional_trace(&TransformSpec::basic(2, 2, 2, 2)).unwrap();
        let r = check_conflicts(&trace);
        assert!(!r.ok);
        // T'(1,:) needs rows 1 and 2 of T in the first read cycle
        assert_eq!(r.first_conflict, Some((4, 0)));
        assert!(r.discarded_words > 0);
    }
}
