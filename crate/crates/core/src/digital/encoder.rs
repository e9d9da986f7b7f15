use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest class count whose encoder table is enumerated (`2^21` rows).
pub const MAX_ENCODER_CLASSES: usize = 7;

/// One-vs-one class pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn ovo_pairs(num_classes: usize) -> Vec<(usize, usize)> {
    (0..num_classes).flat_map(|i| ((i + 1)..num_classes).map(move |j| (i, j))).collect()
}

/// Truth table from the vector of pairwise outcome bits to a class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "EncoderSpec", into = "EncoderSpec")]
pub struct EncoderTable {
    num_classes: usize,
    pairs: Vec<(usize, usize)>,
    /// Class of pattern `Σ b_p << p`.
    mapping: Vec<u8>,
}

/// Serialized form: the table is fully determined by the class count and
/// the tie rule, so only those are stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EncoderSpec {
    num_classes: usize,
    tie_rule: String,
}

const TIE_RULE: &str = "lowest-index";

impl TryFrom<EncoderSpec> for EncoderTable {
    type Error = Error;

    fn try_from(spec: EncoderSpec) -> Result<Self> {
        if spec.tie_rule != TIE_RULE {
            return Err(Error::InvalidParameter(format!("unsupported tie rule {:?}", spec.tie_rule)));
        }
        build_encoder(spec.num_classes)
    }
}

impl From<EncoderTable> for EncoderSpec {
    fn from(t: EncoderTable) -> Self {
        Self {
            num_classes: t.num_classes,
            tie_rule: TIE_RULE.into(),
        }
    }
}

/// Tabulates majority voting over all `2^P` outcome patterns. Bit 0 of
/// pair `(i, j)` is a vote for `i`, bit 1 for `j`; ties go to the lowest
/// class index.
pub fn build_encoder(num_classes: usize) -> Result<EncoderTable> {
    if num_classes < 2 {
        return Err(Error::TooFewClasses(num_classes));
    }
    if num_classes > MAX_ENCODER_CLASSES {
        return Err(Error::TooManyClasses(num_classes));
    }
    let pairs = ovo_pairs(num_classes);
    let mut votes = vec![0u32; num_classes];
    let mapping = (0..1usize << pairs.len())
        .map(|pattern| {
            votes.iter_mut().for_each(|v| *v = 0);
            for (p, &(i, j)) in pairs.iter().enumerate() {
                votes[if pattern >> p & 1 == 1 { j } else { i }] += 1;
            }
            // First maximum wins.
            let mut best = 0;
            for (c, &v) in votes.iter().enumerate() {
                if v > votes[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    Ok(EncoderTable {
        num_classes,
        pairs,
        mapping,
    })
}

impl EncoderTable {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    /// Class for the outcome bits in pair order.
    pub fn lookup(&self, bits: &[u8]) -> Result<usize> {
        if bits.len() != self.pairs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.pairs.len(),
                found: bits.len(),
            });
        }
        let idx = bits.iter().enumerate().fold(0usize, |acc, (p, &b)| acc | (usize::from(b & 1) << p));
        Ok(self.lookup_index(idx))
    }

    /// Class for a packed pattern; bit `p` is the outcome of pair `p`.
    pub fn lookup_index(&self, pattern: usize) -> usize {
        usize::from(self.mapping[pattern])
    }

    /// Truth table as CSV: one column per pair bit (`b<i><j>`) and the
    /// class.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = self.pairs.iter().map(|(i, j)| format!("b{i}_{j}")).collect();
        header.push("class".into());
        w.write_record(&header)?;
        for (pattern, &class) in self.mapping.iter().enumerate() {
            let mut row: Vec<String> = (0..self.pairs.len()).map(|p| (pattern >> p & 1).to_string()).collect();
            row.push(class.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<encoder csv>", e))?;
        Ok(())
    }
}
