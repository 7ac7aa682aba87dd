//! Decode record images from local files for luminance scoring.

use std::path::{Path, PathBuf};

use capsieve_core::client::ClientError;
use capsieve_core::geometry::PixelBuffer;
use capsieve_core::pipeline::PixelSource;

/// Resolves each record's `uri` to a local file and decodes it to RGB.
/// Returns the image's real size; the pipeline cross-checks it against the
/// manifest and charges any mismatch to that record.
pub struct LocalPixelSource {
    root: Option<PathBuf>,
}

impl LocalPixelSource {
    /// Relative paths resolve under `root` when given, the working
    /// directory otherwise. `file://` prefixes are accepted and stripped.
    pub fn new(root: Option<PathBuf>) -> Self {
        LocalPixelSource { root }
    }

    fn resolve(&self, uri: &str) -> PathBuf {
        let path = Path::new(uri.strip_prefix("file://").unwrap_or(uri));
        match &self.root {
            Some(root) if path.is_relative() => root.join(path),
            _ => path.to_path_buf(),
        }
    }
}

impl PixelSource for LocalPixelSource {
    fn load(&self, id: &str, uri: &str, _expect: (u32, u32)) -> Result<PixelBuffer, ClientError> {
        let path = self.resolve(uri);
        let decoded = image::open(&path).map_err(|e| {
            ClientError::Protocol(format!("record {id:?}: {}: {e}", path.display()))
        })?;
        let rgb = decoded.to_rgb8();
        let (width, height) = rgb.dimensions();
        let data: Vec<[u8; 3]> = rgb.pixels().map(|p| p.0).collect();
        PixelBuffer::new(width, height, data)
            .map_err(|e| ClientError::Protocol(format!("record {id:?}: {e}")))
    }
}
