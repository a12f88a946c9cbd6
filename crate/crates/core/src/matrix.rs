//! Images and the view x frame image matrix.
//!
//! On disk an image matrix is a directory holding `v{view:02}_f{frame:03}.png`
//! (8-bit RGBA) plus `manifest.json`. Optional per-cell normal and depth maps
//! are stored next to them as `v.._f...normal.s4tk` / `.depth.s4tk`.

use crate::camera::CameraPose;
use crate::error::{Error, Result};
use crate::tensor::{io as tio, Tensor};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Row-major `height x width x channels` float image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, value: &[f32]) -> Self {
        let mut img = Self::new(width, height, value.len());
        for px in img.data.chunks_mut(value.len()) {
            px.copy_from_slice(value);
        }
        img
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::dim(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Keeps the listed channels, in order.
    pub fn select_channels(&self, channels: &[usize]) -> Image {
        let mut out = Image::new(self.width, self.height, channels.len());
        for (src, dst) in self.data.chunks(self.channels).zip(out.data.chunks_mut(channels.len())) {
            for (d, &c) in dst.iter_mut().zip(channels) {
                *d = src[c];
            }
        }
        out
    }

    /// RGB part of an RGBA image.
    pub fn rgb(&self) -> Image {
        self.select_channels(&[0, 1, 2])
    }

    /// Alpha channel of an RGBA image.
    pub fn alpha(&self) -> Image {
        self.select_channels(&[3])
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.height, self.width, self.channels], self.data.clone()).expect("consistent image")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.shape() {
            [h, w, c] => Self::from_data(*w, *h, *c, t.data().to_vec()),
            [h, w] => Self::from_data(*w, *h, 1, t.data().to_vec()),
            s => Err(Error::dim(format!("tensor of shape {s:?} is not an image"))),
        }
    }

    /// 8-bit RGBA encoding (gray and RGB images get an opaque alpha).
    pub fn to_rgba8(&self) -> Vec<u8> {
        let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let mut out = Vec::with_capacity(self.width * self.height * 4);
        for px in self.data.chunks(self.channels) {
            match self.channels {
                1 => out.extend([q(px[0]), q(px[0]), q(px[0]), 255]),
                3 => out.extend([q(px[0]), q(px[1]), q(px[2]), 255]),
                _ => out.extend([q(px[0]), q(px[1]), q(px[2]), q(px[3])]),
            }
        }
        out
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf = image::RgbaImage::from_raw(self.width as u32, self.height as u32, self.to_rgba8())
            .ok_or_else(|| Error::dim("image buffer size mismatch"))?;
        buf.save(path)?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.to_rgba8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
        Self::from_data(w as usize, h as usize, 4, data)
    }
}

/// `V x F` grid of RGBA images with per-view poses and per-frame indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageMatrix {
    pub views: usize,
    pub frames: usize,
    /// View-major: cell (v, f) lives at `v * frames + f`.
    pub cells: Vec<Image>,
    pub poses: Vec<CameraPose>,
    pub frame_indices: Vec<usize>,
    pub normals: Option<Vec<Image>>,
    pub depths: Option<Vec<Image>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatrixManifest {
    pub views: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub poses: Vec<CameraPose>,
    pub frame_indices: Vec<usize>,
    #[serde(default)]
    pub has_normals: bool,
    #[serde(default)]
    pub has_depths: bool,
}

pub fn cell_name(view: usize, frame: usize) -> String {
    format!("v{view:02}_f{frame:03}")
}

impl ImageMatrix {
    pub fn new(cells: Vec<Image>, views: usize, frames: usize, poses: Vec<CameraPose>, frame_indices: Vec<usize>) -> Result<Self> {
        let m = Self {
            views,
            frames,
            cells,
            poses,
            frame_indices,
            normals: None,
            depths: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.views == 0 || self.frames == 0 {
            return Err(Error::dim("image matrix needs at least one view and one frame"));
        }
        if self.cells.len() != self.views * self.frames {
            return Err(Error::dim(format!(
                "{} cells for a {}x{} matrix",
                self.cells.len(),
                self.views,
                self.frames
            )));
        }
        if self.poses.len() != self.views || self.frame_indices.len() != self.frames {
            return Err(Error::dim(format!(
                "{} poses / {} frame indices for a {}x{} matrix",
                self.poses.len(),
                self.frame_indices.len(),
                self.views,
                self.frames
            )));
        }
        let first = &self.cells[0];
        if self.cells.iter().any(|c| !c.same_size(first)) {
            return Err(Error::dim("image matrix cells differ in size"));
        }
        for maps in [&self.normals, &self.depths].into_iter().flatten() {
            if maps.len() != self.cells.len() || maps.iter().any(|m| !m.same_size(first)) {
                return Err(Error::dim("auxiliary maps do not match the cells"));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.cells[0].width
    }

    pub fn height(&self) -> usize {
        self.cells[0].height
    }

    pub fn index(&self, view: usize, frame: usize) -> usize {
        view * self.frames + frame
    }

    pub fn cell(&self, view: usize, frame: usize) -> &Image {
        &self.cells[self.index(view, frame)]
    }

    pub fn cell_mut(&mut self, view: usize, frame: usize) -> &mut Image {
        let i = self.index(view, frame);
        &mut self.cells[i]
    }

    pub fn manifest(&self) -> MatrixManifest {
        MatrixManifest {
            views: self.views,
            frames: self.frames,
            width: self.width(),
            height: self.height(),
            poses: self.poses.clone(),
            frame_indices: self.frame_indices.clone(),
            has_normals: self.normals.is_some(),
            has_depths: self.depths.is_some(),
        }
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for v in 0..self.views {
            for f in 0..self.frames {
                let i = self.index(v, f);
                let name = cell_name(v, f);
                self.cells[i].save_png(dir.join(format!("{name}.png")))?;
                if let Some(n) = &self.normals {
                    tio::save(dir.join(format!("{name}.normal.s4tk")), &n[i].to_tensor())?;
                }
                if let Some(d) = &self.depths {
                    tio::save(dir.join(format!("{name}.depth.s4tk")), &d[i].to_tensor())?;
                }
            }
        }
        let json = serde_json::to_string_pretty(&self.manifest())?;
        std::fs::write(dir.join("manifest.json"), json)?;
        Ok(())
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: MatrixManifest = serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
        let mut cells = Vec::with_capacity(manifest.views * manifest.frames);
        let mut normals = manifest.has_normals.then(Vec::new);
        let mut depths = manifest.has_depths.then(Vec::new);
        for v in 0..manifest.views {
            for f in 0..manifest.frames {
                let name = cell_name(v, f);
                cells.push(Image::load_png(dir.join(format!("{name}.png")))?);
                if let Some(n) = &mut normals {
                    n.push(Image::from_tensor(&tio::load(dir.join(format!("{name}.normal.s4tk")))?)?);
                }
                if let Some(d) = &mut depths {
                    d.push(Image::from_tensor(&tio::load(dir.join(format!("{name}.depth.s4tk")))?)?);
                }
            }
        }
        let mut m = Self::new(cells, manifest.views, manifest.frames, manifest.poses, manifest.frame_indices)?;
        m.normals = normals;
        m.depths = depths;
        m.validate()?;
        if m.width() != manifest.width || m.height() != manifest.height {
            return Err(Error::Format(format!(
                "manifest says {}x{} but images are {}x{}",
                manifest.width,
                manifest.height,
                m.width(),
                m.height()
            )));
        }
        Ok(m)
    }
}
