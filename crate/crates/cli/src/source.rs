//! Input plumbing shared by the subcommands: opening libsvm or synthetic
//! sources, hashing inputs for the manifest, and the per-line error
//! policy.

use crate::CliError;
use gridlearn::data::{ExampleReader, ParsedRecord, ReadError, SparseExample, SynthSpec, SynthStream};
use gridlearn::Error;
use sha2::{Digest, Sha256};
use std::io::{BufRead, BufReader, Cursor, Read};
use std::path::Path;

/// Where examples come from.
pub enum Source {
    /// Parsed text lines (file or buffered standard input).
    Parsed(ExampleReader<Box<dyn BufRead>>),
    Synth(Box<SynthStream>),
}

/// What the manifest records about the input.
pub struct InputInfo {
    pub kind: &'static str,
    /// Hex digest of the raw input bytes (file or stdin), or of the
    /// canonical synthetic spec.
    pub sha256: String,
}

/// Flags every data-consuming subcommand shares.
#[derive(clap::Args, Clone, Debug)]
pub struct DataArgs {
    /// libsvm input path; `-` reads standard input (plain or gzip)
    #[arg(long, conflicts_with = "synth")]
    pub input: Option<String>,
    /// JSON file describing a deterministic synthetic stream
    #[arg(long)]
    pub synth: Option<std::path::PathBuf>,
    /// Abort on the first malformed input line instead of skipping it
    #[arg(long)]
    pub fail_fast: bool,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest_file(path: &Path) -> std::io::Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

pub fn open(data: &DataArgs) -> Result<(Source, InputInfo), CliError> {
    if let Some(spec_path) = &data.synth {
        let text = std::fs::read_to_string(spec_path)
            .map_err(|e| CliError::Run(format!("reading {}: {e}", spec_path.display())))?;
        let spec: SynthSpec = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad synthetic spec: {e}")))?;
        // Digest the parsed, canonically re-serialized spec so formatting
        // differences in the file do not change the manifest.
        let canonical = serde_json::to_string(&spec).expect("spec serializes");
        let stream = SynthStream::new(spec).map_err(|e| CliError::Usage(e.to_string()))?;
        return Ok((
            Source::Synth(Box::new(stream)),
            InputInfo {
                kind: "synth",
                sha256: sha256_hex(canonical.as_bytes()),
            },
        ));
    }
    match data.input.as_deref() {
        Some("-") => {
            let mut bytes = Vec::new();
            std::io::stdin()
                .lock()
                .read_to_end(&mut bytes)
                .map_err(|e| CliError::Run(format!("reading standard input: {e}")))?;
            let sha256 = sha256_hex(&bytes);
            let reader = gridlearn::data::maybe_gunzip(Cursor::new(bytes))
                .map_err(|e| CliError::Run(e.to_string()))?;
            Ok((
                Source::Parsed(ExampleReader::new(reader)),
                InputInfo {
                    kind: "stdin",
                    sha256,
                },
            ))
        }
        Some(path) => {
            let path = Path::new(path);
            let sha256 = digest_file(path)
                .map_err(|e| CliError::Run(format!("reading {}: {e}", path.display())))?;
            let file = std::fs::File::open(path)
                .map_err(|e| CliError::Run(format!("opening {}: {e}", path.display())))?;
            let reader = gridlearn::data::maybe_gunzip(BufReader::new(file))
                .map_err(|e| CliError::Run(e.to_string()))?;
            Ok((
                Source::Parsed(ExampleReader::new(reader)),
                InputInfo {
                    kind: "file",
                    sha256,
                },
            ))
        }
        None => Err(CliError::Usage(
            "no input: pass --input PATH, --input -, or --synth SPEC.json".to_string(),
        )),
    }
}

pub struct ParseStats {
    pub consumed: u64,
    pub skipped: u64,
}

/// Handle one failed line under the configured policy: I/O errors are
/// always fatal, parse errors abort only with --fail-fast.
fn handle_read_error(err: ReadError, fail_fast: bool, skipped: &mut u64) -> Result<(), CliError> {
    let fatal = fail_fast || matches!(err.error, Error::Io(_));
    if fatal {
        Err(CliError::Run(err.to_string()))
    } else {
        eprintln!("warning: skipping {err}");
        *skipped += 1;
        Ok(())
    }
}

/// Drive a source to exhaustion, feeding each binarized example to `f`.
pub fn for_each(
    source: Source,
    fail_fast: bool,
    f: &mut dyn FnMut(SparseExample) -> Result<(), CliError>,
) -> Result<ParseStats, CliError> {
    let mut stats = ParseStats {
        consumed: 0,
        skipped: 0,
    };
    match source {
        Source::Parsed(reader) => {
            for record in reader {
                match record {
                    Ok(ParsedRecord { line, .. }) => {
                        stats.consumed += 1;
                        f(line.to_example())?;
                    }
                    Err(err) => handle_read_error(err, fail_fast, &mut stats.skipped)?,
                }
            }
        }
        Source::Synth(stream) => {
            for example in *stream {
                stats.consumed += 1;
                f(example)?;
            }
        }
    }
    if stats.skipped > 0 {
        eprintln!("warning: skipped {} malformed line(s)", stats.skipped);
    }
    Ok(stats)
}

/// Buffer a whole source in memory, for multi-pass commands (sweep).
pub fn collect(source: Source, fail_fast: bool) -> Result<Vec<SparseExample>, CliError> {
    let mut examples = Vec::new();
    for_each(source, fail_fast, &mut |ex| {
        examples.push(ex);
        Ok(())
    })?;
    Ok(examples)
}
