//! Datasets, IDX files, input encoding and task sequences.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IdxError, Result};
use crate::snn::Stimulus;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Images scaled to `[0, 1]` with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `N x D`, row-major pixels.
    pub images: Array2<f32>,
    pub labels: Vec<usize>,
    /// Image height and width; `rows * cols == D`.
    pub rows: usize,
    pub cols: usize,
}

impl Dataset {
    pub fn new(images: Array2<f32>, labels: Vec<usize>, rows: usize, cols: usize) -> Result<Self> {
        if images.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.nrows(),
                labels.len()
            )));
        }
        if rows * cols != images.ncols() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} image shape for {} features",
                images.ncols()
            )));
        }
        if images.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Shape("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self {
            images,
            labels,
            rows,
            cols,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.ncols()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            images: self.images.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, context: &'static str) -> Result<&'a [u8], IdxError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(IdxError::Truncated {
                path: self.path.to_path_buf(),
                context,
            }),
        }
    }

    fn u32(&mut self, context: &'static str) -> Result<u32, IdxError> {
        let b = self.take(4, context)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, IdxError> {
    fs::read(path).map_err(|source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn expect_magic(cur: &mut Cursor<'_>, expected: u32) -> Result<(), IdxError> {
    let found = cur.u32("magic number")?;
    if found != expected {
        return Err(IdxError::BadMagic {
            path: cur.path.to_path_buf(),
            found,
            expected,
        });
    }
    Ok(())
}

/// Read an IDX image file and its IDX label file.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (ipath, lpath) = (images.as_ref(), labels.as_ref());
    let ibytes = read_file(ipath)?;
    let lbytes = read_file(lpath)?;

    let mut cur = Cursor {
        bytes: &ibytes,
        pos: 0,
        path: ipath,
    };
    expect_magic(&mut cur, IDX_IMAGES_MAGIC)?;
    let n = cur.u32("image count")? as usize;
    let rows = cur.u32("row count")? as usize;
    let cols = cur.u32("column count")? as usize;
    let pixels = cur.take(n * rows * cols, "pixel data")?;

    let mut lcur = Cursor {
        bytes: &lbytes,
        pos: 0,
        path: lpath,
    };
    expect_magic(&mut lcur, IDX_LABELS_MAGIC)?;
    let nl = lcur.u32("label count")? as usize;
    if nl != n {
        return Err(IdxError::CountMismatch {
            images: n,
            labels: nl,
        }
        .into());
    }
    let labels = lcur.take(nl, "label data")?;

    let images = Array2::from_shape_vec(
        (n, rows * cols),
        pixels.iter().map(|&p| p as f32 / 255.0).collect(),
    )
    .expect("length checked");
    Ok(Dataset {
        images,
        labels: labels.iter().map(|&l| l as usize).collect(),
        rows,
        cols,
    })
}

/// Write a dataset as an IDX image/label pair. Pixels are stored as `round(255 p)`.
pub fn write_idx(data: &Dataset, images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<()> {
    let n = data.len() as u32;
    let mut ib = Vec::with_capacity(16 + data.images.len());
    ib.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    ib.extend_from_slice(&n.to_be_bytes());
    ib.extend_from_slice(&(data.rows as u32).to_be_bytes());
    ib.extend_from_slice(&(data.cols as u32).to_be_bytes());
    ib.extend(data.images.iter().map(|&p| (p * 255.0).round() as u8));

    let mut lb = Vec::with_capacity(8 + data.len());
    lb.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lb.extend_from_slice(&n.to_be_bytes());
    for &l in &data.labels {
        let byte = u8::try_from(l).map_err(|_| Error::Shape(format!("label {l} exceeds a byte")))?;
        lb.push(byte);
    }
    for (path, bytes) in [(images.as_ref(), ib), (labels.as_ref(), lb)] {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Standard file names inside an MNIST-style directory.
pub fn idx_paths(dir: &Path, train: bool) -> (PathBuf, PathBuf) {
    let prefix = if train { "train" } else { "t10k" };
    (
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Load the train and test splits from an MNIST-layout directory.
pub fn load_idx_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let (ti, tl) = idx_paths(dir, true);
    let (vi, vl) = idx_paths(dir, false);
    Ok((load_idx(ti, tl)?, load_idx(vi, vl)?))
}

/// Direct-current encoding: the sample times `gain` at every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub timesteps: usize,
    pub gain: f64,
}

pub fn encode(sample: ArrayView1<f32>, spec: &EncodingSpec) -> Stimulus {
    Stimulus::Constant {
        x: sample.mapv(|p| p as f64 * spec.gain),
        timesteps: spec.timesteps,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: usize,
    pub name: String,
    pub train: Dataset,
    pub test: Dataset,
    /// `classes[local]` is the original label behind local label `local`.
    pub classes: Vec<usize>,
    /// Pixel permutation applied to every image, if any.
    pub permutation: Option<Vec<usize>>,
}

impl Task {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn original_label(&self, local: usize) -> usize {
        self.classes[local]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSequence {
    pub tasks: Vec<Task>,
}

impl TaskSequence {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.tasks.first().map(|t| t.train.dim()).unwrap_or(0)
    }

    pub fn classes_per_task(&self) -> usize {
        self.tasks.first().map(Task::num_classes).unwrap_or(0)
    }

    /// Keep at most `train` / `test` samples per task.
    pub fn capped(mut self, train: Option<usize>, test: Option<usize>) -> Self {
        for t in &mut self.tasks {
            if let Some(n) = train {
                t.train = t.train.head(n);
            }
            if let Some(n) = test {
                t.test = t.test.head(n);
            }
        }
        self
    }
}

/// The five digit pairs `{0,1} .. {8,9}`.
pub const STANDARD_PAIRS: [[usize; 2]; 5] = [[0, 1], [2, 3], [4, 5], [6, 7], [8, 9]];

fn relabel(data: &Dataset, classes: &[usize]) -> Dataset {
    let idx: Vec<usize> = (0..data.len())
        .filter(|&i| classes.contains(&data.labels[i]))
        .collect();
    let mut out = data.select(&idx);
    for l in &mut out.labels {
        *l = classes.iter().position(|c| c == l).expect("filtered");
    }
    out
}

/// One task per class group, labels remapped to positions within the group.
pub fn build_split<G: AsRef<[usize]>>(train: &Dataset, test: &Dataset, groups: &[G]) -> Result<TaskSequence> {
    let mut seen = Vec::new();
    let width = groups.first().map(|g| g.as_ref().len()).unwrap_or(0);
    for g in groups {
        let g = g.as_ref();
        if g.len() < 2 || g.len() != width {
            return Err(Error::Task(format!(
                "class group {g:?}: every group needs the same size >= 2"
            )));
        }
        for &c in g {
            if seen.contains(&c) {
                return Err(Error::Task(format!("class {c} appears in more than one place")));
            }
            if !train.labels.contains(&c) {
                return Err(Error::Task(format!("unknown class {c}")));
            }
            seen.push(c);
        }
    }
    let tasks = groups
        .iter()
        .enumerate()
        .map(|(id, g)| {
            let g = g.as_ref();
            Task {
                id,
                name: format!("classes {g:?}"),
                train: relabel(train, g),
                test: relabel(test, g),
                classes: g.to_vec(),
                permutation: None,
            }
        })
        .collect();
    Ok(TaskSequence { tasks })
}

fn permute(data: &Dataset, perm: &[usize]) -> Dataset {
    let mut out = data.clone();
    for (mut dst, src) in out.images.outer_iter_mut().zip(data.images.outer_iter()) {
        for (d, &p) in dst.iter_mut().zip(perm) {
            *d = src[p];
        }
    }
    out
}

/// `k` tasks, each a seeded random pixel permutation over all classes.
pub fn build_permuted(train: &Dataset, test: &Dataset, k: usize, seed: u64) -> Result<TaskSequence> {
    if k == 0 {
        return Err(Error::Task("permuted benchmark needs at least one task".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = train.dim();
    let num_classes = train.labels.iter().max().map(|m| m + 1).unwrap_or(0);
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(k);
    while perms.len() < k {
        let mut p: Vec<usize> = (0..dim).collect();
        p.shuffle(&mut rng);
        if !perms.contains(&p) {
            perms.push(p);
        }
    }
    let tasks = perms
        .into_iter()
        .enumerate()
        .map(|(id, p)| Task {
            id,
            name: format!("permutation {id}"),
            train: permute(train, &p),
            test: permute(test, &p),
            classes: (0..num_classes).collect(),
            permutation: Some(p),
        })
        .collect();
    Ok(TaskSequence { tasks })
}

/// Parameters for noisy-prototype classification tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub tasks: usize,
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Per-pixel flip probability.
    pub noise: f64,
    /// Fraction of pixels lit in a prototype. Ignored when `orthogonal`.
    pub density: f64,
    /// Give the classes of a task disjoint pixel blocks.
    pub orthogonal: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            tasks: 2,
            classes: 2,
            dim: 64,
            train_per_class: 50,
            test_per_class: 20,
            noise: 0.05,
            density: 0.5,
            orthogonal: false,
            seed: 0,
        }
    }
}

/// Binary prototype images with Bernoulli pixel-flip noise.
pub fn build_synthetic(spec: &SyntheticSpec) -> Result<TaskSequence> {
    if spec.tasks == 0 || spec.classes < 2 || spec.dim == 0 || spec.train_per_class == 0 {
        return Err(Error::Config(format!("degenerate synthetic spec {spec:?}")));
    }
    if !(0.0..=1.0).contains(&spec.noise) || !(0.0..=1.0).contains(&spec.density) {
        return Err(Error::Config("noise and density must lie in [0, 1]".into()));
    }
    if spec.orthogonal && spec.dim < spec.classes {
        return Err(Error::Config("orthogonal prototypes need dim >= classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut tasks = Vec::with_capacity(spec.tasks);
    for id in 0..spec.tasks {
        let prototypes: Vec<Array1<f32>> = if spec.orthogonal {
            let mut pixels: Vec<usize> = (0..spec.dim).collect();
            pixels.shuffle(&mut rng);
            let block = spec.dim / spec.classes;
            (0..spec.classes)
                .map(|c| {
                    let mut p = Array1::zeros(spec.dim);
                    for &px in &pixels[c * block..(c + 1) * block] {
                        p[px] = 1.0;
                    }
                    p
                })
                .collect()
        } else {
            (0..spec.classes)
                .map(|_| Array1::from_shape_simple_fn(spec.dim, || rng.gen_bool(spec.density) as u8 as f32))
                .collect()
        };
        let sample = |per_class: usize, rng: &mut ChaCha8Rng| {
            let n = per_class * spec.classes;
            let mut images = Array2::zeros((n, spec.dim));
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let c = i % spec.classes;
                for (d, &p) in images.row_mut(i).iter_mut().zip(&prototypes[c]) {
                    *d = if rng.gen_bool(spec.noise) { 1.0 - p } else { p };
                }
                labels.push(c);
            }
            Dataset {
                images,
                labels,
                rows: 1,
                cols: spec.dim,
            }
        };
        let train = sample(spec.train_per_class, &mut rng);
        let test = sample(spec.test_per_class, &mut rng);
        tasks.push(Task {
            id,
            name: format!("synthetic {id}"),
            train,
            test,
            classes: (0..spec.classes).collect(),
            permutation: None,
        });
    }
    Ok(TaskSequence { tasks })
}
