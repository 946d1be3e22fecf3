//! Upper-bound accuracy from OR-combining per-document correctness across
//! strategies: a document counts as solved if any strategy in the
//! combination got it right.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Labels;
use crate::model::DocPrediction;

/// The combinations reported by default, each a `+`-joined strategy list.
pub const DEFAULT_COMBOS: [&str; 4] = ["first+second", "first+last", "second+last", "first+second+last"];

/// Correctness bits of one strategy, ordered by `doc_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectnessVector {
    pub strategy: String,
    pub doc_ids: Vec<String>,
    pub bits: Vec<bool>,
}

impl CorrectnessVector {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn accuracy(&self) -> f64 {
        self.popcount() as f64 / self.len() as f64
    }
}

pub fn correctness(predictions: &[DocPrediction], labels: &Labels) -> Result<CorrectnessVector> {
    let first = predictions.first().ok_or(Error::NoDocuments)?;
    let mut rows = predictions
        .iter()
        .map(|p| {
            let y = labels.get(&p.doc_id).ok_or_else(|| Error::MissingLabel {
                doc_id: p.doc_id.clone(),
            })?;
            Ok((p.doc_id.clone(), p.label == *y))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicatePrediction {
            doc_id: w[0].0.clone(),
            page_index: None,
        });
    }
    let (doc_ids, bits) = rows.into_iter().unzip();
    Ok(CorrectnessVector {
        strategy: first.strategy.to_string(),
        doc_ids,
        bits,
    })
}

/// Element-wise OR of the vectors; the result is named by joining the
/// strategy names with `+`.
pub fn combine(vectors: &[&CorrectnessVector]) -> Result<(CorrectnessVector, f64)> {
    let (head, rest) = vectors
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("nothing to combine".into()))?;
    let mut union = (*head).clone();
    for v in rest {
        if v.doc_ids != head.doc_ids {
            return Err(Error::InvalidArgument(format!(
                "correctness vectors {} and {} cover different documents",
                head.strategy, v.strategy
            )));
        }
        union.bits.iter_mut().zip(&v.bits).for_each(|(a, b)| *a |= b);
        union.strategy.push('+');
        union.strategy.push_str(&v.strategy);
    }
    let accuracy = union.accuracy();
    Ok((union, accuracy))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCaseRow {
    pub combo: String,
    pub accuracy: f64,
    /// `accuracy` minus the baseline strategy's accuracy.
    pub delta: f64,
}

/// Splits `"first+second,first+last"` into strategy-name lists.
pub fn parse_combos(spec: &str) -> Result<Vec<Vec<String>>> {
    spec.split(',')
        .map(|combo| {
            let names: Vec<String> = combo.split('+').map(|n| n.trim().to_owned()).collect();
            if names.iter().any(String::is_empty) {
                Err(Error::InvalidArgument(format!("malformed combination {combo:?}")))
            } else {
                Ok(names)
            }
        })
        .collect()
}

pub fn bestcase_table(
    vectors: &BTreeMap<String, CorrectnessVector>,
    combos: &[Vec<String>],
    baseline: &str,
) -> Result<Vec<BestCaseRow>> {
    let lookup = |name: &str| {
        vectors
            .get(name)
            .ok_or_else(|| Error::UnknownStrategy(name.to_owned()))
    };
    let base = lookup(baseline)?;
    combos
        .iter()
        .map(|combo| {
            let members = combo.iter().map(|n| lookup(n)).collect::<Result<Vec<_>>>()?;
            let (union, accuracy) = combine(&members)?;
            if union.doc_ids != base.doc_ids {
                return Err(Error::CoverageMismatch(format!(
                    "baseline {baseline} covers different documents than {}",
                    union.strategy
                )));
            }
            // difference of counts keeps deltas such as 4/20 exact
            let gained = union.popcount() as f64 - base.popcount() as f64;
            Ok(BestCaseRow {
                combo: combo.join("+"),
                accuracy,
                delta: gained / union.len() as f64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vector(name: &str, bits: &[bool]) -> CorrectnessVector {
        CorrectnessVector {
            strategy: name.into(),
            doc_ids: (1..=bits.len()).map(|i| format!("d{i}")).collect(),
            bits: bits.to_vec(),
        }
    }

    #[test]
    fn correctness_sorted_by_doc_id() {
        use crate::aggregate::Strategy;
        let mk = |id: &str, label| DocPrediction {
            doc_id: id.into(),
            strategy: Strategy::First,
            label,
            confidence: 0.5,
            scores: vec![],
            fallback_used: false,
        };
        let preds = vec![mk("d3", 1), mk("d1", 0), mk("d4", 1), mk("d2", 0)];
        let labels: Labels = (1..=4).map(|i| (format!("d{i}"), 0)).collect();
        let v = correctness(&preds, &labels).unwrap();
        assert_eq!(v.bits, vec![true, true, false, false]);
        assert_eq!(v.strategy, "first");
        assert_eq!(v.accuracy(), 0.5);
        assert!(correctness(&preds, &Labels::new()).is_err());
    }

    #[test]
    fn union_hand_example() {
        let a = vector("first", &[true, true, false, false]);
        let b = vector("second", &[false, true, true, false]);
        let (u, acc) = combine(&[&a, &b]).unwrap();
        assert_eq!(u.bits, vec![true, true, true, false]);
        assert_eq!(acc, 0.75);
        assert_eq!(u.strategy, "first+second");

        let (same, _) = combine(&[&a]).unwrap();
        assert_eq!(same, a);

        let not_a = vector("not", &[false, false, true, true]);
        assert_eq!(combine(&[&a, &not_a]).unwrap().1, 1.0);
    }

    #[test]
    fn combine_rejects_mismatched_documents() {
        let a = vector("a", &[true, false]);
        let b = vector("b", &[true, false, true]);
        assert!(combine(&[&a, &b]).is_err());
        assert!(combine(&[]).is_err());
    }

    #[test]
    fn table_rows_and_deltas() {
        let vectors: BTreeMap<_, _> = [
            vector("first", &[true, true, false, false]),
            vector("second", &[false, true, true, false]),
        ]
        .into_iter()
        .map(|v| (v.strategy.clone(), v))
        .collect();
        let combos = parse_combos("first+second,first").unwrap();
        let rows = bestcase_table(&vectors, &combos, "first").unwrap();
        assert_eq!(
            rows,
            vec![
                BestCaseRow { combo: "first+second".into(), accuracy: 0.75, delta: 0.25 },
                BestCaseRow { combo: "first".into(), accuracy: 0.5, delta: 0.0 },
            ]
        );
        let bad = parse_combos("first+third").unwrap();
        assert!(matches!(
            bestcase_table(&vectors, &bad, "first"),
            Err(Error::UnknownStrategy(s)) if s == "third"
        ));
        assert!(bestcase_table(&vectors, &combos, "last").is_err());
    }

    #[test]
    fn parse_default_combos() {
        let combos = parse_combos(&DEFAULT_COMBOS.join(",")).unwrap();
        assert_eq!(combos.len(), 4);
        assert_eq!(combos[3], vec!["first", "second", "last"]);
        assert!(parse_combos("first++last").is_err());
    }

    proptest! {
        #[test]
        fn combine_commutes_and_associates(
            bits in proptest::collection::vec(any::<(bool, bool, bool)>(), 1..64)
        ) {
            let a = vector("a", &bits.iter().map(|b| b.0).collect::<Vec<_>>());
            let b = vector("b", &bits.iter().map(|b| b.1).collect::<Vec<_>>());
            let c = vector("c", &bits.iter().map(|b| b.2).collect::<Vec<_>>());
            let ab = combine(&[&a, &b]).unwrap().0;
            let ba = combine(&[&b, &a]).unwrap().0;
            prop_assert_eq!(&ab.bits, &ba.bits);
            let ab_c = combine(&[&ab, &c]).unwrap().0;
            let bc = combine(&[&b, &c]).unwrap().0;
            let a_bc = combine(&[&a, &bc]).unwrap().0;
            prop_assert_eq!(&ab_c.bits, &a_bc.bits);
            prop_assert!(ab.accuracy() >= a.accuracy().max(b.accuracy()));
        }
    }
}
