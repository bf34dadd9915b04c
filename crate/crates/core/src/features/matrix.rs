use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{segment, window_features, Feature, SpectrumWorkspace, ThresholdSpec, WindowSpec};
use crate::error::{Error, Result};
use crate::model::{Channel, ChannelKind, GestureId, LabelTrack, Modality, Placement, Recording};

/// Version tag of the binary feature cache.
pub const CACHE_VERSION: u32 = 1;
const CACHE_MAGIC: &[u8; 6] = b"EMGFM\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowMeta {
    pub gesture: GestureId,
    pub repetition: u8,
    pub window_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnId {
    pub placement: Placement,
    pub kind: ChannelKind,
    pub feature: Feature,
}

impl ColumnId {
    pub fn name(&self) -> String {
        format!("{}:{}:{}", self.placement, self.kind, self.feature)
    }
}

/// Set of `(placement, modality)` pairs feeding a feature matrix.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChannelSelection(pub BTreeSet<(Placement, Modality)>);

impl ChannelSelection {
    pub fn new(placements: &[Placement], modalities: &[Modality]) -> Self {
        ChannelSelection(
            placements
                .iter()
                .flat_map(|p| modalities.iter().map(move |m| (*p, *m)))
                .collect(),
        )
    }

    pub fn contains(&self, placement: Placement, kind: ChannelKind) -> bool {
        self.0.contains(&(placement, kind.modality()))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Windows x features, with per-row provenance and per-column identity.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<RowMeta>,
    pub columns: Vec<ColumnId>,
    /// Row-major values.
    pub data: Vec<f64>,
}

/// Rows and row-major values of one channel.
pub(crate) type ChannelBlock = (Vec<RowMeta>, Vec<ColumnId>, Vec<f64>);

pub(crate) fn channel_block(
    channel: &Channel,
    labels: &LabelTrack,
    wspec: &WindowSpec,
    th: &ThresholdSpec,
    ws: &mut SpectrumWorkspace,
) -> Result<ChannelBlock> {
    let windows = segment(channel, labels, wspec)?;
    let names = Feature::for_kind(channel.kind);
    let columns: Vec<ColumnId> = names
        .iter()
        .map(|&feature| ColumnId {
            placement: channel.placement,
            kind: channel.kind,
            feature,
        })
        .collect();
    let mut rows = Vec::with_capacity(windows.len());
    let mut data = Vec::with_capacity(windows.len() * names.len());
    for w in &windows {
        let fv = window_features(w, th, ws)?;
        debug_assert_eq!(fv.names, names);
        rows.push(RowMeta {
            gesture: w.gesture,
            repetition: w.repetition,
            window_index: w.index,
        });
        data.extend(fv.values);
    }
    Ok((rows, columns, data))
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols() + col]
    }

    pub fn labels(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.gesture.index()).collect()
    }

    /// Joins per-channel blocks on the rows they all share. Blocks are
    /// ordered by `(placement, kind)` first.
    pub(crate) fn from_blocks(mut blocks: Vec<ChannelBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::EmptySelection);
        }
        blocks.sort_by_key(|b| b.1.first().map(|c| (c.placement, c.kind)));
        let mut common: Vec<RowMeta> = blocks[0].0.clone();
        for b in &blocks[1..] {
            let set: HashSet<&RowMeta> = b.0.iter().collect();
            common.retain(|r| set.contains(r));
        }
        let columns: Vec<ColumnId> = blocks.iter().flat_map(|b| b.1.iter().copied()).collect();
        let p = columns.len();
        let mut data = vec![0.0; common.len() * p];
        let mut offset = 0;
        for (rows, cols, values) in &blocks {
            let width = cols.len();
            let index: std::collections::HashMap<&RowMeta, usize> =
                rows.iter().enumerate().map(|(i, r)| (r, i)).collect();
            for (i, r) in common.iter().enumerate() {
                let src = index[r];
                data[i * p + offset..i * p + offset + width]
                    .copy_from_slice(&values[src * width..(src + 1) * width]);
            }
            offset += width;
        }
        Ok(FeatureMatrix {
            rows: common,
            columns,
            data,
        })
    }

    /// Sub-matrix with the columns that satisfy `keep`, order preserved.
    pub fn select_columns(&self, keep: impl Fn(&ColumnId) -> bool) -> FeatureMatrix {
        let idx: Vec<usize> = (0..self.n_cols()).filter(|&j| keep(&self.columns[j])).collect();
        let mut data = Vec::with_capacity(self.n_rows() * idx.len());
        for i in 0..self.n_rows() {
            let row = self.row(i);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        FeatureMatrix {
            rows: self.rows.clone(),
            columns: idx.iter().map(|&j| self.columns[j]).collect(),
            data,
        }
    }

    pub fn select(&self, selection: &ChannelSelection) -> Result<FeatureMatrix> {
        if selection.is_empty() {
            return Err(Error::EmptySelection);
        }
        let m = self.select_columns(|c| selection.contains(c.placement, c.kind));
        if m.n_cols() == 0 {
            return Err(Error::EmptySelection);
        }
        Ok(m)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "gesture,repetition,window_index")?;
        for c in &self.columns {
            write!(w, ",{}", c.name())?;
        }
        writeln!(w)?;
        for (i, r) in self.rows.iter().enumerate() {
            write!(w, "{},{},{}", r.gesture.index(), r.repetition, r.window_index)?;
            for v in self.row(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_rows() as u64).to_le_bytes())?;
        w.write_all(&(self.n_cols() as u64).to_le_bytes())?;
        for r in &self.rows {
            w.write_all(&[r.gesture.index() as u8, r.repetition])?;
            w.write_all(&r.window_index.to_le_bytes())?;
        }
        for c in &self.columns {
            w.write_all(&[c.placement as u8, c.kind as u8, c.feature.code()])?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<FeatureMatrix> {
        let bad = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        };
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        let mut cur = bytes.as_slice();
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(bad("truncated feature cache"));
            }
            let (a, b) = cur.split_at(n);
            cur = b;
            Ok(a)
        };
        if take(6)? != CACHE_MAGIC {
            return Err(bad("not a feature cache"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(bad(&format!("cache version {version}, expected {CACHE_VERSION}")));
        }
        let n_rows = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let n_cols = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let mut rows = Vec::with_capacity(n_rows);
        for _ in 0..n_rows {
            let h = take(2)?;
            let (g, rep) = (h[0], h[1]);
            let idx = u32::from_le_bytes(take(4)?.try_into().unwrap());
            rows.push(RowMeta {
                gesture: GestureId::new(g as usize).ok_or_else(|| bad("gesture id"))?,
                repetition: rep,
                window_index: idx,
            });
        }
        let mut columns = Vec::with_capacity(n_cols);
        for _ in 0..n_cols {
            let c = take(3)?;
            columns.push(ColumnId {
                placement: *Placement::ALL.get(c[0] as usize).ok_or_else(|| bad("placement"))?,
                kind: *ChannelKind::ALL.get(c[1] as usize).ok_or_else(|| bad("kind"))?,
                feature: Feature::from_code(c[2]).ok_or_else(|| bad("feature"))?,
            });
        }
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for _ in 0..n_rows * n_cols {
            data.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
        Ok(FeatureMatrix {
            rows,
            columns,
            data,
        })
    }
}

/// Windows x features for the selected channels of a preprocessed recording.
pub fn extract_matrix(
    rec: &Recording,
    labels: &LabelTrack,
    wspec: &WindowSpec,
    th: &ThresholdSpec,
    selection: &ChannelSelection,
) -> Result<FeatureMatrix> {
    if selection.is_empty() {
        return Err(Error::EmptySelection);
    }
    let chosen: Vec<&Channel> = rec
        .channels
        .iter()
        .filter(|c| selection.contains(c.placement, c.kind))
        .collect();
    if chosen.is_empty() {
        return Err(Error::EmptySelection);
    }
    let blocks = chosen
        .par_iter()
        .map_init(SpectrumWorkspace::new, |ws, ch| channel_block(ch, labels, wspec, th, ws))
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::from_blocks(blocks)
}
