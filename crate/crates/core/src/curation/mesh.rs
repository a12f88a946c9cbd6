use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Triangle mesh with fixed topology and per-frame vertex positions.
#[derive(Clone, Debug, PartialEq)]
pub struct AnimatedMesh {
    frames: Vec<Vec<[f32; 3]>>,
    faces: Vec<[u32; 3]>,
    pub frame_rate: f32,
}

impl AnimatedMesh {
    pub fn new(frames: Vec<Vec<[f32; 3]>>, faces: Vec<[u32; 3]>, frame_rate: f32) -> Result<Self> {
        let n = frames.first().map_or(0, Vec::len);
        if frames.is_empty() || n < 3 {
            return Err(Error::Curation(format!("mesh needs at least 1 frame and 3 vertices, got {} x {n}", frames.len())));
        }
        if let Some(f) = frames.iter().position(|v| v.len() != n) {
            return Err(Error::Curation(format!("frame {f} has {} vertices, frame 0 has {n}", frames[f].len())));
        }
        if frames.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Curation("non-finite vertex position".into()));
        }
        if faces.iter().flatten().any(|&i| i as usize >= n) {
            return Err(Error::Curation(format!("face index out of range for {n} vertices")));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::Curation(format!("frame rate {frame_rate} must be positive")));
        }
        Ok(Self { frames, faces, frame_rate })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.frames[0].len()
    }

    pub fn frames(&self) -> &[Vec<[f32; 3]>] {
        &self.frames
    }

    pub fn frame(&self, f: usize) -> &[[f32; 3]] {
        &self.frames[f]
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Applies `map(frame, position)` to every vertex.
    pub fn map_positions(&self, map: impl Fn(usize, [f32; 3]) -> [f32; 3]) -> Result<Self> {
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(f, vs)| vs.iter().map(|&p| map(f, p)).collect())
            .collect();
        Self::new(frames, self.faces.clone(), self.frame_rate)
    }

    /// Axis-aligned bounds `(min, max)` of one frame.
    pub fn bounds(&self, f: usize) -> ([f32; 3], [f32; 3]) {
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for p in &self.frames[f] {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Reads one OBJ file per frame. Every frame must share frame 0's faces.
    pub fn load_obj_sequence<P: AsRef<Path>>(paths: &[P], frame_rate: f32) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::Curation("empty OBJ sequence".into()));
        }
        let mut frames = Vec::with_capacity(paths.len());
        let mut faces: Option<Vec<[u32; 3]>> = None;
        for path in paths {
            let (v, f) = read_obj(path.as_ref())?;
            match &faces {
                None => faces = Some(f),
                Some(f0) if *f0 != f => {
                    return Err(Error::Curation(format!("{} changes the mesh topology", path.as_ref().display())));
                }
                Some(_) => {}
            }
            frames.push(v);
        }
        Self::new(frames, faces.unwrap_or_default(), frame_rate)
    }

    /// Writes `{stem}_{frame:04}.obj` files and returns their paths.
    pub fn save_obj_sequence(&self, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::with_capacity(self.frames.len());
        for (f, vs) in self.frames.iter().enumerate() {
            let mut s = String::new();
            for p in vs {
                writeln!(s, "v {} {} {}", p[0], p[1], p[2]).expect("write to string");
            }
            for t in &self.faces {
                writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).expect("write to string");
            }
            let path = dir.join(format!("{stem}_{f:04}.obj"));
            std::fs::write(&path, s)?;
            out.push(path);
        }
        Ok(out)
    }
}

/// Reads `v` and `f` records, keeping vertices in file order. Polygons are
/// fan-triangulated; texture and normal indices are ignored.
fn read_obj(path: &Path) -> Result<(Vec<[f32; 3]>, Vec<[u32; 3]>)> {
    let text = std::fs::read_to_string(path)?;
    let bad = |line: usize, what: &str| Error::Format(format!("{}:{}: {what}", path.display(), line + 1));
    let mut verts: Vec<[f32; 3]> = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f32> = it.take(3).map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad(ln, "bad vertex"))?;
                if c.len() != 3 {
                    return Err(bad(ln, "vertex needs 3 coordinates"));
                }
                verts.push([c[0], c[1], c[2]]);
            }
            Some("f") => {
                let idx = it
                    .map(|tok| {
                        let i: i64 = tok.split('/').next().unwrap_or("").parse().map_err(|_| bad(ln, "bad face index"))?;
                        let i = if i < 0 { verts.len() as i64 + i } else { i - 1 };
                        u32::try_from(i).map_err(|_| bad(ln, "face index out of range"))
                    })
                    .collect::<Result<Vec<u32>>>()?;
                if idx.len() < 3 {
                    return Err(bad(ln, "face needs 3 vertices"));
                }
                faces.extend((1..idx.len() - 1).map(|k| [idx[0], idx[k], idx[k + 1]]));
            }
            _ => {}
        }
    }
    Ok((verts, faces))
}

/// One animated object in a mesh manifest. Frame paths are relative to the
/// manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshEntry {
    pub id: String,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f32,
    pub frames: Vec<String>,
    /// Informational only; positions are used as stored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

fn default_frame_rate() -> f32 {
    24.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeshManifest {
    pub objects: Vec<MeshEntry>,
}

impl MeshManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_object(&self, base_dir: impl AsRef<Path>, index: usize) -> Result<AnimatedMesh> {
        let e = self
            .objects
            .get(index)
            .ok_or_else(|| Error::Index(format!("object {index} of {}", self.objects.len())))?;
        let paths: Vec<PathBuf> = e.frames.iter().map(|p| base_dir.as_ref().join(p)).collect();
        AnimatedMesh::load_obj_sequence(&paths, e.frame_rate)
    }

    /// Writes each mesh as an OBJ sequence under `dir` plus `dir/manifest.json`.
    pub fn write_set(dir: impl AsRef<Path>, meshes: &[(String, AnimatedMesh)]) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let mut objects = Vec::with_capacity(meshes.len());
        for (id, mesh) in meshes {
            let paths = mesh.save_obj_sequence(dir.join(id), id)?;
            let frames = paths
                .iter()
                .map(|p| p.strip_prefix(dir).expect("written under dir").to_string_lossy().into_owned())
                .collect();
            objects.push(MeshEntry {
                id: id.clone(),
                frame_rate: mesh.frame_rate,
                frames,
                units: None,
            });
        }
        let path = dir.join("manifest.json");
        MeshManifest { objects }.save(&path)?;
        Ok(path)
    }
}
