use std::path::Path;

/// Errors of the file-format and command-line layer.
#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] artist_core::Error),
}

pub type Result<T> = std::result::Result<T, ToolError>;

impl ToolError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit status: 2 for I/O failures, 3 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            ToolError::Io { .. } => 2,
            _ => 3,
        }
    }
}

pub fn read_to_string(path: impl AsRef<Path>) -> Result<String> {
    std::fs::read_to_string(path.as_ref()).map_err(|e| ToolError::io(path, e))
}

pub fn write(path: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| ToolError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| ToolError::io(path, e))
}
