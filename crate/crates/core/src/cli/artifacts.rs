use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use lfsafa::data::io::{decode_lf, detect_angular, view_file_name};
use lfsafa::data::LightField;
use lfsafa::{Error, Result};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

pub fn sha256_json(value: &Value) -> String {
    format!("{:x}", Sha256::digest(value.to_string().as_bytes()))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Output directory of one subcommand; collects what it writes for the manifest.
pub struct OutDir {
    root: PathBuf,
    outputs: Vec<PathBuf>,
}

impl OutDir {
    /// Refuses a non-empty existing directory unless `force` is set.
    pub fn create(root: &Path, force: bool) -> Result<Self> {
        if root.is_file() {
            return Err(Error::InvalidArgument(format!("{} is a file, expected a directory", root.display())));
        }
        let occupied = root.is_dir() && fs::read_dir(root).map_err(|e| io_err(root, e))?.next().is_some();
        if occupied && !force {
            return Err(Error::InvalidArgument(format!(
                "{} already exists and is not empty; pass --force to overwrite",
                root.display()
            )));
        }
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: impl AsRef<Path>) -> PathBuf {
        self.root.join(name)
    }

    pub fn record(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn record_all(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.outputs.extend(paths);
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        self.record(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)?;
        self.write_text(name, &(text + "\n"))
    }

    /// Writes `config.json` and `manifest.json`; call last.
    pub fn finish(mut self, command: &str, config: &Value, inputs: &[PathBuf]) -> Result<()> {
        self.write_json("config.json", config)?;
        let mut input_entries = Vec::new();
        for path in inputs {
            for file in files_under(path)? {
                input_entries.push(json!({ "path": file.display().to_string(), "sha256": sha256_file(&file)? }));
            }
        }
        let mut output_entries = Vec::new();
        for path in &self.outputs {
            let rel = path.strip_prefix(&self.root).unwrap_or(path);
            output_entries.push(json!({ "path": rel.display().to_string(), "sha256": sha256_file(path)? }));
        }
        let manifest = json!({
            "tool": "lfsafa",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config_digest": sha256_json(config),
            "inputs": input_entries,
            "outputs": output_entries,
        });
        let path = self.path("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }
}

/// Regular files at or below `path`, sorted.
fn files_under(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| io_err(path, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| io_err(path, err)))
            .collect::<Result<_>>()?;
        entries.sort();
        for e in entries {
            out.extend(files_under(&e)?);
        }
    }
    Ok(out)
}

/// A named light field read from disk.
pub struct Scene {
    pub name: String,
    pub lf: LightField,
}

fn is_view_dir(path: &Path) -> bool {
    path.join(view_file_name(0, 0)).is_file()
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "lf".to_string())
}

fn load_one(path: &Path, angular: Option<usize>) -> Result<LightField> {
    if path.is_dir() {
        let a = match angular {
            Some(a) => a,
            None => detect_angular(path)?,
        };
        decode_lf(path, a)
    } else {
        let a = angular.ok_or_else(|| {
            Error::InvalidArgument(format!("{} is a macro-pixel image; pass --angular", path.display()))
        })?;
        decode_lf(path, a)
    }
}

pub struct Collection {
    pub scenes: Vec<Scene>,
    /// The path named one light field rather than a directory of them.
    pub single: bool,
}

impl Collection {
    /// Where the output for `scene` goes under `root`, mirroring the input layout.
    pub fn scene_dir(&self, root: &Path, scene: &Scene) -> PathBuf {
        if self.single {
            root.to_path_buf()
        } else {
            root.join(&scene.name)
        }
    }
}

/// Loads a single light field (view directory or macro-pixel PNG) or a
/// directory whose entries are light fields, in name order.
pub fn load_scenes(path: &Path, angular: Option<usize>) -> Result<Collection> {
    if !path.exists() {
        return Err(Error::InvalidArgument(format!("{} does not exist", path.display())));
    }
    if path.is_file() || is_view_dir(path) {
        return Ok(Collection {
            scenes: vec![Scene {
                name: stem(path),
                lf: load_one(path, angular)?,
            }],
            single: true,
        });
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| io_err(path, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| io_err(path, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    let mut scenes = Vec::new();
    for e in entries {
        let png = e.extension().is_some_and(|x| x.eq_ignore_ascii_case("png"));
        if is_view_dir(&e) || (e.is_file() && png) {
            scenes.push(Scene {
                name: stem(&e),
                lf: load_one(&e, angular)?,
            });
        }
    }
    if scenes.is_empty() {
        return Err(Error::InvalidArgument(format!("no light fields found under {}", path.display())));
    }
    Ok(Collection { scenes, single: false })
}

/// Writes `<file>.manifest.json` for a command whose output is a single file.
pub fn file_manifest(out: &Path, command: &str, config: &Value, inputs: &[PathBuf]) -> Result<()> {
    let mut input_entries = Vec::new();
    for path in inputs {
        for file in files_under(path)? {
            input_entries.push(json!({ "path": file.display().to_string(), "sha256": sha256_file(&file)? }));
        }
    }
    let manifest = json!({
        "tool": "lfsafa",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "config_digest": sha256_json(config),
        "inputs": input_entries,
        "outputs": [{ "path": out.display().to_string(), "sha256": sha256_file(out)? }],
    });
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    let path = PathBuf::from(name);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| io_err(&path, e))
}
