//! Class-to-codeword assignments and the size arithmetic they induce.
//!
//! A [`Codebook`] is an injective map from ordinal class labels to data words
//! of `n_data_bits` bits, tagged with the encoding scheme that turns a data
//! word into output-channel bits. Bit order is LSB-first everywhere: bit `k`
//! of a data word is `(word >> k) & 1`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ecc::{DataWord, HammingCode74};
use crate::error::{Error, Result};

/// Upper bound on data-word width; keeps random construction and lookup
/// tables at sane sizes.
const MAX_DATA_BITS: usize = 24;

const CODEBOOK_FORMAT_VERSION: u32 = 1;

/// Encoding scheme applied to data words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Data bits are the output channels directly.
    Vanilla,
    /// Data bits are Hamming(7,4)-encoded in 4-bit chunks.
    Hamming74,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Vanilla => "vanilla",
            Scheme::Hamming74 => "hamming74",
        }
    }

    /// Encoded bit count for a data word of `n_data_bits` bits.
    pub fn encoded_bits(&self, n_data_bits: usize) -> usize {
        match self {
            Scheme::Vanilla => n_data_bits,
            Scheme::Hamming74 => 7 * n_data_bits.div_ceil(4),
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Scheme::Vanilla),
            "hamming74" => Ok(Scheme::Hamming74),
            other => Err(Error::invalid(format!(
                "unknown scheme '{other}' (expected 'vanilla' or 'hamming74')"
            ))),
        }
    }
}

/// Minimum number of data bits needed to give each of `n_classes` classes a
/// distinct word: `ceil(log2(n_classes))`.
pub fn required_data_bits(n_classes: usize) -> Result<usize> {
    if n_classes < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 classes, got {n_classes}"
        )));
    }
    Ok((n_classes - 1).ilog2() as usize + 1)
}

/// Encoded bit count under Hamming(7,4) chunking: `7 * ceil(data_bits / 4)`.
pub fn required_hamming_bits(n_classes: usize) -> Result<usize> {
    Ok(7 * required_data_bits(n_classes)?.div_ceil(4))
}

/// Output-tensor shrink factor of an encoding versus one channel per class:
/// `n_classes / n_encoded_bits`.
pub fn memory_reduction_factor(n_classes: usize, scheme: Scheme) -> Result<f64> {
    let encoded = scheme.encoded_bits(required_data_bits(n_classes)?);
    Ok(n_classes as f64 / encoded as f64)
}

/// An injective class-to-data-word assignment plus scheme metadata.
///
/// Immutable after construction; share freely across threads.
#[derive(Debug, Clone)]
pub struct Codebook {
    n_classes: usize,
    n_data_bits: usize,
    scheme: Scheme,
    background_class: u16,
    assignment: Vec<u32>,
    // Derived lookups rebuilt from the fields above.
    word_to_class: HashMap<u32, u16>,
    encoded: Vec<u8>, // n_classes * n_encoded_bits, class-major
}

impl PartialEq for Codebook {
    fn eq(&self, other: &Self) -> bool {
        self.n_classes == other.n_classes
            && self.n_data_bits == other.n_data_bits
            && self.scheme == other.scheme
            && self.background_class == other.background_class
            && self.assignment == other.assignment
    }
}

impl Codebook {
    /// Build a codebook with the default data-bit width
    /// `required_data_bits(n_classes)` and background class 0.
    pub fn new(n_classes: usize, scheme: Scheme, assignment: Vec<u32>) -> Result<Self> {
        let n_data_bits = required_data_bits(n_classes)?;
        Self::with_parts(n_classes, n_data_bits, scheme, assignment, 0)
    }

    /// Fully explicit constructor; `n_data_bits` may exceed the minimum.
    pub fn with_parts(
        n_classes: usize,
        n_data_bits: usize,
        scheme: Scheme,
        assignment: Vec<u32>,
        background_class: u16,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if n_classes > u16::MAX as usize + 1 {
            return Err(Error::invalid(format!(
                "class labels are 16-bit; {n_classes} classes do not fit"
            )));
        }
        if n_data_bits < required_data_bits(n_classes)? || n_data_bits > MAX_DATA_BITS {
            return Err(Error::invalid(format!(
                "{n_data_bits} data bits cannot hold {n_classes} distinct classes \
                 (need {} to {MAX_DATA_BITS})",
                required_data_bits(n_classes)?
            )));
        }
        if assignment.len() != n_classes {
            return Err(Error::invalid(format!(
                "assignment covers {} classes, expected {n_classes}",
                assignment.len()
            )));
        }
        if (background_class as usize) >= n_classes {
            return Err(Error::invalid(format!(
                "background class {background_class} out of range for {n_classes} classes"
            )));
        }
        let mut word_to_class = HashMap::with_capacity(n_classes);
        for (class, &word) in assignment.iter().enumerate() {
            if word >> n_data_bits != 0 {
                return Err(Error::invalid(format!(
                    "data word {word} of class {class} does not fit in {n_data_bits} bits"
                )));
            }
            if let Some(prev) = word_to_class.insert(word, class as u16) {
                return Err(Error::invalid(format!(
                    "assignment is not injective: classes {prev} and {class} share word {word}"
                )));
            }
        }
        let mut book = Codebook {
            n_classes,
            n_data_bits,
            scheme,
            background_class,
            assignment,
            word_to_class,
            encoded: Vec::new(),
        };
        book.encoded = book.build_encoded_table();
        Ok(book)
    }

    /// Identity assignment: class `c` gets data word `c`.
    pub fn identity(n_classes: usize, scheme: Scheme) -> Result<Self> {
        Self::new(n_classes, scheme, (0..n_classes as u32).collect())
    }

    /// Same book with a different hard-decoding fallback class.
    pub fn with_background_class(self, background_class: u16) -> Result<Self> {
        Self::with_parts(
            self.n_classes,
            self.n_data_bits,
            self.scheme,
            self.assignment,
            background_class,
        )
    }

    /// Seeded uniform random injection from classes into data words.
    ///
    /// Deterministic for a fixed seed: a partial Fisher-Yates shuffle of the
    /// full word range selects the first `n_classes` words of a uniform
    /// random permutation.
    pub fn random(n_classes: usize, scheme: Scheme, seed: u64) -> Result<Self> {
        use rand::Rng;
        use rand::SeedableRng;

        let n_data_bits = required_data_bits(n_classes)?;
        let n_words = 1usize << n_data_bits;
        let mut words: Vec<u32> = (0..n_words as u32).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for i in 0..n_classes {
            let j = rng.random_range(i..n_words);
            words.swap(i, j);
        }
        words.truncate(n_classes);
        Self::new(n_classes, scheme, words)
    }

    fn build_encoded_table(&self) -> Vec<u8> {
        let n_bits = self.n_encoded_bits();
        let mut table = Vec::with_capacity(self.n_classes * n_bits);
        let hamming = HammingCode74::new();
        for &word in &self.assignment {
            match self.scheme {
                Scheme::Vanilla => {
                    for k in 0..self.n_data_bits {
                        table.push(((word >> k) & 1) as u8);
                    }
                }
                Scheme::Hamming74 => {
                    let data = DataWord::new(word, self.n_data_bits)
                        .expect("assignment validated against n_data_bits");
                    table.extend_from_slice(&hamming.encode_chunked(data));
                }
            }
        }
        table
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_data_bits(&self) -> usize {
        self.n_data_bits
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Output channel count: `n_data_bits` for vanilla, `7 * ceil(n_data_bits / 4)`
    /// for Hamming(7,4).
    pub fn n_encoded_bits(&self) -> usize {
        self.scheme.encoded_bits(self.n_data_bits)
    }

    /// Class emitted by hard decoding when a word is absent from the book.
    pub fn background_class(&self) -> u16 {
        self.background_class
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    /// Data word assigned to `class`.
    pub fn data_word(&self, class: u16) -> Result<u32> {
        self.assignment
            .get(class as usize)
            .copied()
            .ok_or_else(|| {
                Error::invalid(format!(
                    "class {class} out of range for {} classes",
                    self.n_classes
                ))
            })
    }

    /// Class owning `word`, or `None` for words outside the book.
    pub fn class_of_word(&self, word: u32) -> Option<u16> {
        self.word_to_class.get(&word).copied()
    }

    /// Encoded bit sequence (LSB-first data order) for `class`.
    pub fn encode_label(&self, class: u16) -> Result<Vec<u8>> {
        Ok(self.encoded_bits(class)?.to_vec())
    }

    /// Precomputed encoded bits for `class`, length `n_encoded_bits`.
    pub fn encoded_bits(&self, class: u16) -> Result<&[u8]> {
        if (class as usize) >= self.n_classes {
            return Err(Error::invalid(format!(
                "class {class} out of range for {} classes",
                self.n_classes
            )));
        }
        let n_bits = self.n_encoded_bits();
        let start = class as usize * n_bits;
        Ok(&self.encoded[start..start + n_bits])
    }

    pub fn memory_reduction_factor(&self) -> f64 {
        self.n_classes as f64 / self.n_encoded_bits() as f64
    }

    /// Serialize to the versioned JSON codebook format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CodebookFile {
            format_version: CODEBOOK_FORMAT_VERSION,
            bit_order: "lsb-first".to_string(),
            n_classes: self.n_classes,
            n_data_bits: self.n_data_bits,
            scheme: self.scheme,
            background_class: self.background_class,
            assignment: self.assignment.clone(),
        };
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    /// Load and validate a codebook file. Round trips bit-exactly with
    /// [`Codebook::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CodebookFile = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", e.line())))?;
        if file.format_version != CODEBOOK_FORMAT_VERSION {
            return Err(Error::parse(
                path,
                format!(
                    "unsupported format version {} (expected {CODEBOOK_FORMAT_VERSION})",
                    file.format_version
                ),
            ));
        }
        if file.bit_order != "lsb-first" {
            return Err(Error::parse(
                path,
                format!("unsupported bit order '{}'", file.bit_order),
            ));
        }
        Self::with_parts(
            file.n_classes,
            file.n_data_bits,
            file.scheme,
            file.assignment,
            file.background_class,
        )
        .map_err(|e| Error::parse(path, e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    format_version: u32,
    bit_order: String,
    n_classes: usize,
    n_data_bits: usize,
    scheme: Scheme,
    background_class: u16,
    assignment: Vec<u32>,
}

impl Serialize for Codebook {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        CodebookFile {
            format_version: CODEBOOK_FORMAT_VERSION,
            bit_order: "lsb-first".to_string(),
            n_classes: self.n_classes,
            n_data_bits: self.n_data_bits,
            scheme: self.scheme,
            background_class: self.background_class,
            assignment: self.assignment.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Codebook {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = CodebookFile::deserialize(deserializer)?;
        if file.format_version != CODEBOOK_FORMAT_VERSION {
            return Err(serde::de::Error::custom(format!(
                "unsupported codebook format version {}",
                file.format_version
            )));
        }
        if file.bit_order != "lsb-first" {
            return Err(serde::de::Error::custom(format!(
                "unsupported bit order '{}'",
                file.bit_order
            )));
        }
        Codebook::with_parts(
            file.n_classes,
            file.n_data_bits,
            file.scheme,
            file.assignment,
            file.background_class,
        )
        .map_err(serde::de::Error::custom)
    }
}
