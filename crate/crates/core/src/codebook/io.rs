use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Codebook, CodebookError, Metric};

/// Leading bytes of an embedding file.
pub const EMBEDDING_MAGIC: &[u8; 6] = b"DRECB1";

const HEADER_LEN: usize = 6 + 4 + 4;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CodebookError + '_ {
    move |source| CodebookError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads `(count, dim, values)` from an embedding file: magic, `u32` count,
/// `u32` dim (both little-endian), then `count × dim` little-endian `f32`
/// values in row-major order.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f32>), CodebookError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() < HEADER_LEN || &bytes[..6] != EMBEDDING_MAGIC {
        return Err(CodebookError::Format(format!(
            "{}: missing DRECB1 magic bytes",
            path.display()
        )));
    }
    let count = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    let row_bytes = dim * 4;
    if payload.len() != count * row_bytes {
        let rows = payload.len().checked_div(row_bytes).unwrap_or(0);
        return Err(CodebookError::Format(format!(
            "{}: header says {count} codes of dim {dim}, payload has {rows} rows ({} bytes)",
            path.display(),
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((count, dim, values))
}

pub fn write_embeddings(path: impl AsRef<Path>, dim: usize, values: &[f32]) -> Result<(), CodebookError> {
    let path = path.as_ref();
    if dim == 0 || !values.len().is_multiple_of(dim) {
        return Err(CodebookError::Format(format!(
            "{} values do not form rows of dim {dim}",
            values.len()
        )));
    }
    let count = values.len() / dim;
    let mut buf = Vec::with_capacity(HEADER_LEN + values.len() * 4);
    buf.extend_from_slice(EMBEDDING_MAGIC);
    buf.extend_from_slice(&(count as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(io_err(path))
}

/// Writes one `<token id>\t<token>` line per code.
pub fn write_vocab(path: impl AsRef<Path>, cb: &Codebook) -> Result<(), CodebookError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for c in 0..cb.len() {
        writeln!(w, "{}\t{}", cb.token_id(c), cb.token(c)).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the embedding table and vocabulary of `cb`. Embeddings are
/// narrowed to `f32`.
pub fn save_codebook(cb: &Codebook, vocab_path: impl AsRef<Path>, emb_path: impl AsRef<Path>) -> Result<(), CodebookError> {
    let values: Vec<f32> = cb.embeddings().iter().map(|&v| v as f32).collect();
    write_embeddings(emb_path, cb.dim(), &values)?;
    write_vocab(vocab_path, cb)
}

/// Loads a codebook; line `i` of the vocabulary names row `i` of the
/// embedding table.
pub fn load_codebook(vocab_path: impl AsRef<Path>, emb_path: impl AsRef<Path>) -> Result<Codebook, CodebookError> {
    let (count, dim, values) = read_embeddings(emb_path)?;
    let vocab_path = vocab_path.as_ref();
    let text = fs::read_to_string(vocab_path).map_err(io_err(vocab_path))?;
    let file = vocab_path.display().to_string();
    let mut ids = Vec::with_capacity(count);
    let mut tokens = Vec::with_capacity(count);
    let body = text.strip_suffix('\n').unwrap_or(&text);
    let lines = if text.is_empty() { None } else { Some(body.split('\n')) };
    for (i, line) in lines.into_iter().flatten().enumerate() {
        let (id_s, tok) = line.split_once('\t').ok_or_else(|| CodebookError::Vocab {
            file: file.clone(),
            line: i + 1,
            msg: "expected <code_index>\\t<token>".into(),
        })?;
        let id: u32 = id_s.trim().parse().map_err(|_| CodebookError::Vocab {
            file: file.clone(),
            line: i + 1,
            msg: format!("bad code index {id_s:?}"),
        })?;
        ids.push(id);
        tokens.push(tok.to_string());
    }
    if tokens.len() != count {
        return Err(CodebookError::Format(format!(
            "vocabulary has {} rows but the embedding table has {count}",
            tokens.len()
        )));
    }
    let embeddings = values.into_iter().map(f64::from).collect();
    Codebook::new(ids, tokens, dim, embeddings, Metric::Cosine)
}
