use std::fs;
use std::path::{Path, PathBuf};

use bkc_core::bintensor::{
    channel_unpack, decode_kernel, decode_packed, BinaryKernel, PackedKernel,
};

use crate::error::{CliError, Result};

pub const KERNEL_EXT: &str = "bnk";

/// Expands a directory to its `.bnk` files in name order.
pub fn expand(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| CliError::input(path, e))?;
    if !meta.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| CliError::input(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == KERNEL_EXT))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::input(path, "directory holds no .bnk files"));
    }
    Ok(files)
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::input(path, e))
}

pub fn load_kernel(path: &Path) -> Result<BinaryKernel> {
    decode_kernel(&read(path)?).map_err(|e| CliError::input(path, e))
}

/// Kernels from every argument, in argument order.
pub fn load_kernels(paths: &[PathBuf]) -> Result<Vec<(PathBuf, BinaryKernel)>> {
    let mut out = Vec::new();
    for p in paths {
        for f in expand(p)? {
            let k = load_kernel(&f)?;
            out.push((f, k));
        }
    }
    Ok(out)
}

pub enum AnyKernel {
    Plain(BinaryKernel),
    Packed(PackedKernel),
}

impl AnyKernel {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read(path)?;
        match bytes.get(..4) {
            Some(b"BNP1") => {
                let p = decode_packed(&bytes).map_err(|e| CliError::input(path, e))?;
                Ok(AnyKernel::Packed(p))
            }
            _ => Ok(AnyKernel::Plain(
                decode_kernel(&bytes).map_err(|e| CliError::input(path, e))?,
            )),
        }
    }

    pub fn plain(&self) -> Result<BinaryKernel> {
        match self {
            AnyKernel::Plain(k) => Ok(k.clone()),
            AnyKernel::Packed(p) => channel_unpack(p).map_err(|e| CliError::Format(e.to_string())),
        }
    }
}

pub fn file_label(path: &Path) -> String {
    path.file_stem()
        .or(path.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
