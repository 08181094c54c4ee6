//! Download of the standard IDX archives with MD5 verification.

use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use md5::{Digest, Md5};

use super::config::DatasetKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemoteFile {
    pub name: &'static str,
    pub md5: &'static str,
}

const MNIST_URL: &str = "https://ossci-datasets.s3.amazonaws.com/mnist/";
const MNIST_FILES: [RemoteFile; 4] = [
    RemoteFile { name: "train-images-idx3-ubyte.gz", md5: "f68b3c2dcbeaaa9fbdd348bbdeb94873" },
    RemoteFile { name: "train-labels-idx1-ubyte.gz", md5: "d53e105ee54ea40749a09fcbcd1e9432" },
    RemoteFile { name: "t10k-images-idx3-ubyte.gz", md5: "9fb629c4189551a2d022fa330f9573f3" },
    RemoteFile { name: "t10k-labels-idx1-ubyte.gz", md5: "ec29112dd5afa0611ce80d1b7f02629c" },
];

const FASHION_URL: &str = "https://github.com/zalandoresearch/fashion-mnist/raw/master/data/fashion/";
const FASHION_FILES: [RemoteFile; 4] = [
    RemoteFile { name: "train-images-idx3-ubyte.gz", md5: "8d4fb7e6c68d591d4c3dfef9ec88bf0d" },
    RemoteFile { name: "train-labels-idx1-ubyte.gz", md5: "25c81989df183df01b3e8a0aad5dffbe" },
    RemoteFile { name: "t10k-images-idx3-ubyte.gz", md5: "bef4ecab320f06d8554ea6380940ec79" },
    RemoteFile { name: "t10k-labels-idx1-ubyte.gz", md5: "bb300cfdad3c16e7a12a480ee83cd310" },
];

/// Base URL and archive list of a downloadable dataset.
pub fn remote_files(kind: DatasetKind) -> Result<(&'static str, &'static [RemoteFile])> {
    match kind {
        DatasetKind::Mnist => Ok((MNIST_URL, &MNIST_FILES)),
        DatasetKind::FashionMnist => Ok((FASHION_URL, &FASHION_FILES)),
        DatasetKind::Synthetic => Err(Error::Config("synthetic data is generated, not downloaded".into())),
    }
}

pub fn md5_hex(path: &Path) -> Result<String> {
    let mut hasher = Md5::new();
    io::copy(&mut File::open(path)?, &mut hasher)?;
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn verify_file(path: &Path, expected: &str) -> Result<()> {
    let actual = md5_hex(path)?;
    if actual != expected {
        return Err(Error::Checksum {
            file: path.display().to_string(),
            expected: expected.to_string(),
            actual,
        });
    }
    Ok(())
}

fn download(url: &str, dest: &Path) -> Result<()> {
    let resp = ureq::get(url)
        .call()
        .map_err(|e| Error::Download(format!("{url}: {e}")))?;
    let mut body = Vec::new();
    resp.into_reader()
        .take(200 << 20)
        .read_to_end(&mut body)
        .map_err(|e| Error::Download(format!("{url}: {e}")))?;
    std::fs::write(dest, body)?;
    Ok(())
}

/// Makes sure every archive of `kind` is present in `dir` with the right
/// checksum, downloading what is missing or corrupt.
pub fn fetch_data(kind: DatasetKind, dir: &Path) -> Result<Vec<PathBuf>> {
    let (base, files) = remote_files(kind)?;
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for f in files {
        let dest = dir.join(f.name);
        if dest.exists() && verify_file(&dest, f.md5).is_ok() {
            out.push(dest);
            continue;
        }
        let partial = dir.join(format!("{}.part", f.name));
        download(&format!("{base}{}", f.name), &partial)?;
        if let Err(e) = verify_file(&partial, f.md5) {
            let _ = std::fs::remove_file(&partial);
            return Err(e);
        }
        std::fs::rename(&partial, &dest)?;
        out.push(dest);
    }
    Ok(out)
}
