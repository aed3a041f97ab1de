//! Pairwise dissimilarities for siamese pretraining.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use petgraph::unionfind::UnionFind;

use crate::error::{Error, Result};
use crate::format::{join, read_f32s, split_list, write_f32s, Header};

pub const DM_MAGIC: &str = "CHARTJEPA-DM v1";

/// Symmetric `n x n` dissimilarities with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DissimilarityMatrix {
    pub kind: String,
    /// Dataset sample index of each row.
    pub indices: Vec<usize>,
    d: Vec<f64>,
}

impl DissimilarityMatrix {
    /// Fills the upper triangle from `f(i, j)`, `i < j`, and mirrors it.
    pub fn from_fn(
        kind: impl Into<String>,
        indices: Vec<usize>,
        mut f: impl FnMut(usize, usize) -> Result<f64>,
    ) -> Result<Self> {
        let n = indices.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j)?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::invalid(format!("dissimilarity ({i}, {j}) = {v}")));
                }
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Ok(DissimilarityMatrix {
            kind: kind.into(),
            indices,
            d,
        })
    }

    pub fn n(&self) -> usize {
        self.indices.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.d[i * n..(i + 1) * n]
    }

    pub fn max(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }

    /// Rounds every entry through `f32`, the storage precision.
    pub fn quantize(&mut self) {
        self.d.iter_mut().for_each(|x| *x = *x as f32 as f64);
    }

    pub fn write_to(&self, w: &mut impl Write, extra: &[(String, String)]) -> Result<()> {
        let mut h = Header::new();
        h.push("n", self.n())
            .push("kind", &self.kind)
            .push("indices", join(&self.indices))
            .push("layout", "upper_triangle_row_major_f32");
        for (k, v) in extra {
            h.push(format!("extra.{k}"), v);
        }
        h.write(DM_MAGIC, w)?;
        let n = self.n();
        for i in 0..n {
            write_f32s(w, self.row(i)[i + 1..].iter().map(|&x| x as f32))?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl BufRead) -> Result<(Self, Vec<(String, String)>)> {
        const WHAT: &str = "dissimilarity matrix";
        let h = Header::read(DM_MAGIC, WHAT, r)?;
        let n: usize = h.parse(WHAT, "n")?;
        let indices: Vec<usize> = split_list(WHAT, h.require(WHAT, "indices")?)?;
        if indices.len() != n {
            return Err(Error::format(WHAT, "index list length differs from n"));
        }
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            let row = read_f32s(r, n - i - 1)?;
            for (k, v) in row.into_iter().enumerate() {
                let j = i + 1 + k;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::format(WHAT, format!("bad entry ({i}, {j}) = {v}")));
                }
                d[i * n + j] = v as f64;
                d[j * n + i] = v as f64;
            }
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(Error::format(WHAT, "trailing bytes after the upper triangle"));
        }
        let extra = h
            .entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("extra.").map(|k| (k.to_string(), v.clone())))
            .collect();
        Ok((
            DissimilarityMatrix {
                kind: h.require(WHAT, "kind")?.to_string(),
                indices,
                d,
            },
            extra,
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>, extra: &[(String, String)]) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w, extra)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Vec<(String, String)>)> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

/// Position of a sample in time: trajectory id and slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotTag {
    pub trajectory: usize,
    pub slot: usize,
}

/// Parameters of the fused geodesic.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicConfig {
    /// Nearest neighbours by local distance.
    pub k: usize,
    /// Slots within which samples of one trajectory are linked.
    pub time_window: usize,
    /// Local-distance units per second of elapsed time on temporal edges.
    pub speed_scale: f64,
    pub slot_duration: f64,
}

impl GeodesicConfig {
    pub fn desk() -> Self {
        GeodesicConfig {
            k: 15,
            time_window: 3,
            speed_scale: 1.0,
            slot_duration: 0.04,
        }
    }
}

/// Shortest-path distances on a neighbourhood graph.
///
/// `local(i, j)` is the local dissimilarity. Every node links to its `k`
/// nearest nodes (ties by index); nodes of the same trajectory within
/// `time_window` slots are linked too, with weight
/// `min(local, speed_scale * elapsed_seconds)`.
pub fn geodesic_fused(
    kind: impl Into<String>,
    indices: Vec<usize>,
    tags: &[SlotTag],
    local: &DissimilarityMatrix,
    cfg: &GeodesicConfig,
) -> Result<DissimilarityMatrix> {
    let n = local.n();
    if tags.len() != n || indices.len() != n {
        return Err(Error::invalid("tags and indices must match the local matrix"));
    }
    if n < cfg.k + 1 {
        return Err(Error::invalid(format!("need n >= k + 1, got n = {n}, k = {}", cfg.k)));
    }

    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        let row = local.row(i);
        order.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        for &j in order.iter().take(cfg.k) {
            edges.push((i.min(j), i.max(j), row[j]));
        }
        for j in i + 1..n {
            let (a, b) = (tags[i], tags[j]);
            let gap = a.slot.abs_diff(b.slot);
            if a.trajectory == b.trajectory && gap <= cfg.time_window {
                let elapsed = cfg.speed_scale * gap as f64 * cfg.slot_duration;
                edges.push((i, j, row[j].min(elapsed)));
            }
        }
    }
    // Keep the lightest copy of every undirected edge.
    edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)).then(x.2.total_cmp(&y.2)));
    edges.dedup_by(|later, kept| later.0 == kept.0 && later.1 == kept.1);

    let mut uf = UnionFind::<usize>::new(n);
    for &(a, b, _) in &edges {
        uf.union(a, b);
    }
    let labels = uf.into_labeling();
    let mut sizes = std::collections::BTreeMap::new();
    for l in &labels {
        *sizes.entry(*l).or_insert(0usize) += 1;
    }
    if sizes.len() > 1 {
        let mut s: Vec<usize> = sizes.into_values().collect();
        s.sort_unstable_by(|a, b| b.cmp(a));
        return Err(Error::Disconnected(s));
    }

    let mut g = UnGraph::<(), f64, u32>::with_capacity(n, edges.len());
    let nodes: Vec<NodeIndex> = (0..n).map(|_| g.add_node(())).collect();
    for &(a, b, w) in &edges {
        g.add_edge(nodes[a], nodes[b], w);
    }
    let mut all = vec![0.0; n * n];
    for i in 0..n {
        let dist = dijkstra(&g, nodes[i], None, |e| *e.weight());
        for (node, d) in dist {
            all[i * n + node.index()] = d;
        }
    }
    // Floating-point path sums can differ by direction; use the smaller one.
    DissimilarityMatrix::from_fn(kind, indices, |i, j| Ok(all[i * n + j].min(all[j * n + i])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn matrix(n: usize, f: impl Fn(usize, usize) -> f64) -> DissimilarityMatrix {
        DissimilarityMatrix::from_fn("test", (0..n).collect(), |i, j| Ok(f(i, j))).unwrap()
    }

    #[test]
    fn symmetric_zero_diagonal_and_file_round_trip() {
        let mut m = matrix(5, |i, j| (i * 7 + j) as f64 * 0.1);
        for i in 0..5 {
            assert_eq!(m.get(i, i), 0.0);
            for j in 0..5 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
        m.quantize();
        let mut buf = Vec::new();
        m.write_to(&mut buf, &[("seed".into(), "3".into())]).unwrap();
        let (back, extra) = DissimilarityMatrix::read_from(&mut Cursor::new(buf.clone())).unwrap();
        assert_eq!(back, m);
        assert_eq!(extra, vec![("seed".to_string(), "3".to_string())]);
        // 10 upper-triangle entries of 4 bytes follow the header.
        let text_end = buf.windows(4).position(|w| w == b"---\n").unwrap() + 4;
        assert_eq!(buf.len() - text_end, 40);
    }

    #[test]
    fn temporal_chain_gives_slot_gap() {
        // Local distances all 1: only the temporal edges (weight 0.04 per slot) matter.
        let n = 10;
        let local = matrix(n, |_, _| 1.0);
        let tags: Vec<SlotTag> = (0..n)
            .map(|s| SlotTag {
                trajectory: 0,
                slot: s,
            })
            .collect();
        let cfg = GeodesicConfig {
            k: 1,
            time_window: 1,
            speed_scale: 1.0,
            slot_duration: 0.04,
        };
        let g = geodesic_fused("geodesic", (0..n).collect(), &tags, &local, &cfg).unwrap();
        for i in 0..n {
            for j in 0..n {
                let want = 0.04 * i.abs_diff(j) as f64;
                assert!((g.get(i, j) - want).abs() < 1e-12, "{i} {j}");
            }
        }
    }

    #[test]
    fn disconnected_graph_reports_components() {
        // Two far-apart clusters of 3 with k = 2 and no temporal links.
        let local = matrix(6, |i, j| if (i < 3) == (j < 3) { 0.1 } else { 0.9 });
        let tags: Vec<SlotTag> = (0..6)
            .map(|i| SlotTag {
                trajectory: i,
                slot: 0,
            })
            .collect();
        let cfg = GeodesicConfig {
            k: 2,
            time_window: 0,
            speed_scale: 1.0,
            slot_duration: 0.04,
        };
        match geodesic_fused("g", (0..6).collect(), &tags, &local, &cfg) {
            Err(Error::Disconnected(sizes)) => assert_eq!(sizes, vec![3, 3]),
            other => panic!("expected disconnection, got {other:?}"),
        }
    }
}
