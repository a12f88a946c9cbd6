use serde::{Deserialize, Serialize};

/// How the cells of a views x frames matrix are read into sequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScanKind {
    /// One sequence per view, over frames.
    F,
    /// One sequence per frame, over views.
    V,
    /// The main diagonal, truncated to `min(V, F)` cells.
    Diag,
    /// Every cell once: rows are views, even rows run forward in time and
    /// odd rows backward.
    Fv4d,
}

impl ScanKind {
    pub const ALL: [ScanKind; 4] = [ScanKind::F, ScanKind::V, ScanKind::Diag, ScanKind::Fv4d];

    pub fn name(&self) -> &'static str {
        match self {
            ScanKind::F => "fvd-f",
            ScanKind::V => "fvd-v",
            ScanKind::Diag => "fvd-diag",
            ScanKind::Fv4d => "fv4d",
        }
    }

    /// Shortest (views, frames) for which every sequence has 2 cells.
    pub fn minimum(&self) -> &'static str {
        match self {
            ScanKind::F => "F >= 2",
            ScanKind::V => "V >= 2",
            ScanKind::Diag => "min(V, F) >= 2",
            ScanKind::Fv4d => "V * F >= 2",
        }
    }
}

/// Sequences of `(view, frame)` cells for `kind`.
pub fn scan_order(kind: ScanKind, views: usize, frames: usize) -> Vec<Vec<(usize, usize)>> {
    match kind {
        ScanKind::F => (0..views).map(|v| (0..frames).map(|f| (v, f)).collect()).collect(),
        ScanKind::V => (0..frames).map(|f| (0..views).map(|v| (v, f)).collect()).collect(),
        ScanKind::Diag => vec![(0..views.min(frames)).map(|i| (i, i)).collect()],
        ScanKind::Fv4d => vec![(0..views)
            .flat_map(|v| {
                let row: Box<dyn Iterator<Item = usize>> = if v % 2 == 0 { Box::new(0..frames) } else { Box::new((0..frames).rev()) };
                row.map(move |f| (v, f))
            })
            .collect()],
    }
}
