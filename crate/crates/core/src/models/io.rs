//! Model persistence: a single-line JSON header followed by flat
//! little-endian f64 parameter blocks, in header order. Stacked models
//! nest their bases in the header and prefix their block names.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde_json::{json, Value};

use super::cnb::CnbModel;
use super::logreg::LinearModel;
use super::mlp::MlpModel;
use super::ovr::{BinaryLogistic, OvrModel};
use super::stack::StackModel;
use super::TrainedModel;
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

type Sections = Vec<(String, Vec<f64>)>;

fn push(sections: &mut Sections, prefix: &str, name: &str, values: Vec<f64>) {
    sections.push((format!("{prefix}{name}"), values));
}

fn encode(model: &TrainedModel, prefix: &str, sections: &mut Sections) -> Value {
    match model {
        TrainedModel::Logreg(m) => {
            push(sections, prefix, "weights", m.weights.iter().cloned().collect());
            push(sections, prefix, "bias", m.bias.to_vec());
            json!({
                "family": "logreg",
                "classes": m.classes,
                "dim": m.weights.ncols(),
                "lambda": m.lambda,
            })
        }
        TrainedModel::Cnb(m) => {
            push(sections, prefix, "log_weights", m.log_weights.iter().cloned().collect());
            json!({
                "family": "cnb",
                "classes": m.classes,
                "dim": m.log_weights.ncols(),
                "alpha": m.alpha,
            })
        }
        TrainedModel::Mlp(m) => {
            push(sections, prefix, "w1", m.w1.iter().cloned().collect());
            push(sections, prefix, "b1", m.b1.to_vec());
            push(sections, prefix, "w2", m.w2.iter().cloned().collect());
            push(sections, prefix, "b2", m.b2.to_vec());
            json!({
                "family": "mlp",
                "classes": m.classes,
                "dim": m.w1.ncols(),
                "hidden": m.w1.nrows(),
            })
        }
        TrainedModel::Ovr(m) => {
            let mut trained = Vec::new();
            for (c, sub) in m.models.iter().enumerate() {
                if let Some(b) = sub {
                    let mut values = b.weights.to_vec();
                    values.push(b.bias);
                    push(sections, prefix, &format!("class{c}"), values);
                    trained.push(c);
                }
            }
            json!({
                "family": "ovr",
                "classes": m.classes,
                "dim": m.models.iter().flatten().next().map(|b| b.weights.len()).unwrap_or(0),
                "lambda": m.lambda,
                "trained": trained,
                "skipped": m.skipped,
            })
        }
        TrainedModel::Stack(m) => {
            let bases: Vec<Value> = m
                .bases
                .iter()
                .enumerate()
                .map(|(i, b)| encode(b, &format!("{prefix}base{i}/"), sections))
                .collect();
            let meta = encode(
                &TrainedModel::Logreg(m.meta.clone()),
                &format!("{prefix}meta/"),
                sections,
            );
            json!({
                "family": "stack",
                "classes": m.classes,
                "column_masks": m.column_masks,
                "bases": bases,
                "meta": meta,
            })
        }
    }
}

fn field<'a>(meta: &'a Value, name: &str) -> Result<&'a Value> {
    meta.get(name)
        .ok_or_else(|| Error::Model(format!("model header missing `{name}`")))
}

fn classes_of(meta: &Value) -> Result<Vec<String>> {
    serde_json::from_value(field(meta, "classes")?.clone())
        .map_err(|e| Error::Model(format!("bad class list in model header: {e}")))
}

fn take(
    sections: &mut std::collections::BTreeMap<String, Vec<f64>>,
    name: &str,
    expect: usize,
) -> Result<Vec<f64>> {
    let values = sections
        .remove(name)
        .ok_or_else(|| Error::Model(format!("model file missing section `{name}`")))?;
    if values.len() != expect {
        return Err(Error::Model(format!(
            "section `{name}` has {} values, expected {expect}",
            values.len()
        )));
    }
    Ok(values)
}

fn usize_field(meta: &Value, name: &str) -> Result<usize> {
    field(meta, name)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| Error::Model(format!("`{name}` in model header is not an integer")))
}

fn f64_field(meta: &Value, name: &str) -> Result<f64> {
    field(meta, name)?
        .as_f64()
        .ok_or_else(|| Error::Model(format!("`{name}` in model header is not a number")))
}

fn decode(
    meta: &Value,
    prefix: &str,
    sections: &mut std::collections::BTreeMap<String, Vec<f64>>,
) -> Result<TrainedModel> {
    let family = field(meta, "family")?.as_str().unwrap_or_default().to_string();
    let classes = classes_of(meta)?;
    let c = classes.len();
    match family.as_str() {
        "logreg" => {
            let dim = usize_field(meta, "dim")?;
            let weights = take(sections, &format!("{prefix}weights"), c * dim)?;
            let bias = take(sections, &format!("{prefix}bias"), c)?;
            Ok(TrainedModel::Logreg(LinearModel {
                weights: Array2::from_shape_vec((c, dim), weights).unwrap(),
                bias: Array1::from(bias),
                lambda: f64_field(meta, "lambda")?,
                classes,
            }))
        }
        "cnb" => {
            let dim = usize_field(meta, "dim")?;
            let log_weights = take(sections, &format!("{prefix}log_weights"), c * dim)?;
            Ok(TrainedModel::Cnb(CnbModel {
                log_weights: Array2::from_shape_vec((c, dim), log_weights).unwrap(),
                alpha: f64_field(meta, "alpha")?,
                classes,
            }))
        }
        "mlp" => {
            let dim = usize_field(meta, "dim")?;
            let hidden = usize_field(meta, "hidden")?;
            let w1 = take(sections, &format!("{prefix}w1"), hidden * dim)?;
            let b1 = take(sections, &format!("{prefix}b1"), hidden)?;
            let w2 = take(sections, &format!("{prefix}w2"), c * hidden)?;
            let b2 = take(sections, &format!("{prefix}b2"), c)?;
            Ok(TrainedModel::Mlp(MlpModel {
                w1: Array2::from_shape_vec((hidden, dim), w1).unwrap(),
                b1: Array1::from(b1),
                w2: Array2::from_shape_vec((c, hidden), w2).unwrap(),
                b2: Array1::from(b2),
                classes,
            }))
        }
        "ovr" => {
            let dim = usize_field(meta, "dim")?;
            let trained: Vec<usize> = serde_json::from_value(field(meta, "trained")?.clone())
                .map_err(|e| Error::Model(format!("bad `trained` list: {e}")))?;
            let skipped: Vec<String> = serde_json::from_value(field(meta, "skipped")?.clone())
                .map_err(|e| Error::Model(format!("bad `skipped` list: {e}")))?;
            let mut models = vec![None; c];
            for idx in trained {
                let mut values = take(sections, &format!("{prefix}class{idx}"), dim + 1)?;
                let bias = values.pop().unwrap();
                models[idx] = Some(BinaryLogistic {
                    weights: Array1::from(values),
                    bias,
                });
            }
            Ok(TrainedModel::Ovr(OvrModel {
                models,
                classes,
                lambda: f64_field(meta, "lambda")?,
                skipped,
            }))
        }
        "stack" => {
            let base_metas = field(meta, "bases")?
                .as_array()
                .ok_or_else(|| Error::Model("`bases` is not a list".into()))?
                .clone();
            let column_masks: Vec<Option<Vec<usize>>> =
                serde_json::from_value(field(meta, "column_masks")?.clone())
                    .map_err(|e| Error::Model(format!("bad `column_masks`: {e}")))?;
            let bases = base_metas
                .iter()
                .enumerate()
                .map(|(i, m)| decode(m, &format!("{prefix}base{i}/"), sections))
                .collect::<Result<Vec<_>>>()?;
            let meta_model = decode(field(meta, "meta")?, &format!("{prefix}meta/"), sections)?;
            let meta_model = match meta_model {
                TrainedModel::Logreg(m) => m,
                other => {
                    return Err(Error::Model(format!(
                        "stack meta model has family `{}`, expected logreg",
                        other.family()
                    )))
                }
            };
            Ok(TrainedModel::Stack(StackModel {
                bases,
                column_masks,
                meta: meta_model,
                classes,
            }))
        }
        other => Err(Error::Model(format!("unknown model family `{other}`"))),
    }
}

/// Side information carried in the model file header: the dataset
/// manifest hash the model was trained on, plus free-form attributes
/// (e.g. the feature variant the training command used).
#[derive(Debug, Clone, Default)]
pub struct ModelFileMeta {
    pub manifest_sha256: Option<String>,
    pub attrs: BTreeMap<String, String>,
}

pub fn save_model(path: &Path, model: &TrainedModel, file_meta: &ModelFileMeta) -> Result<()> {
    let mut sections = Sections::new();
    let meta = encode(model, "", &mut sections);
    let header = json!({
        "format_version": FORMAT_VERSION,
        "manifest_sha256": file_meta.manifest_sha256,
        "attrs": file_meta.attrs,
        "model": meta,
        "sections": sections
            .iter()
            .map(|(name, values)| json!({"name": name, "len": values.len()}))
            .collect::<Vec<_>>(),
    });
    let mut out = Vec::new();
    serde_json::to_writer(&mut out, &header).map_err(|e| Error::Model(e.to_string()))?;
    out.push(b'\n');
    for (_, values) in &sections {
        for v in values {
            out.write_all(&v.to_le_bytes()).unwrap();
        }
    }
    let tmp = crate::audio::temp_sibling(path);
    std::fs::write(&tmp, &out).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Returns the model and its header side information.
pub fn load_model(path: &Path) -> Result<(TrainedModel, ModelFileMeta)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Model("model file has no header line".into()))?;
    let header: Value = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::Model(format!("bad model header: {e}")))?;
    let version = usize_field(&header, "format_version")?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::Model(format!(
            "unsupported model format version {version}"
        )));
    }
    let manifest = header
        .get("manifest_sha256")
        .and_then(|v| v.as_str())
        .map(|s| s.to_string());
    let attrs: BTreeMap<String, String> = header
        .get("attrs")
        .cloned()
        .and_then(|v| serde_json::from_value(v).ok())
        .unwrap_or_default();

    let mut sections = std::collections::BTreeMap::new();
    let mut cursor = &bytes[newline + 1..];
    for entry in field(&header, "sections")?
        .as_array()
        .ok_or_else(|| Error::Model("`sections` is not a list".into()))?
    {
        let name = field(entry, "name")?.as_str().unwrap_or_default().to_string();
        let len = usize_field(entry, "len")?;
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            let mut buf = [0u8; 8];
            cursor
                .read_exact(&mut buf)
                .map_err(|_| Error::Model(format!("model file truncated in section `{name}`")))?;
            values.push(f64::from_le_bytes(buf));
        }
        sections.insert(name, values);
    }

    let model = decode(field(&header, "model")?, "", &mut sections)?;
    Ok((
        model,
        ModelFileMeta {
            manifest_sha256: manifest,
            attrs,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::logreg::test_support::blobs;
    use crate::models::stack::{fit_stack, BaseSpec};
    use crate::models::ModelSpec;

    fn assert_bit_identical(a: &TrainedModel, b: &TrainedModel, x: &Array2<f64>) {
        let pa = a.predict_proba(x);
        let pb = b.predict_proba(x);
        assert_eq!(pa.shape(), pb.shape());
        for (u, v) in pa.iter().zip(pb.iter()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn every_family_round_trips_bit_for_bit() {
        let data = blobs(30, 3, 2.0, 17);
        let dir = tempfile::tempdir().unwrap();
        let specs = vec![
            ModelSpec::Logreg { lambda: 0.01 },
            ModelSpec::Cnb { alpha: 1.0 },
            ModelSpec::Mlp {
                hidden: 4,
                learning_rate: 0.1,
                epochs: 20,
                batch_size: 16,
                seed: 1,
            },
            ModelSpec::Ovr { lambda: 0.01 },
        ];
        // CNB needs nonnegative features
        let nonneg = {
            let mut d = data.clone();
            d.x.mapv_inplace(f64::abs);
            d
        };
        for spec in specs {
            let train = if matches!(spec, ModelSpec::Cnb { .. }) {
                &nonneg
            } else {
                &data
            };
            let model = spec.fit(train).unwrap();
            let path = dir.path().join(format!("{}.model", model.family()));
            let file_meta = ModelFileMeta {
                manifest_sha256: Some("abc123".into()),
                attrs: BTreeMap::from([("variant".to_string(), "M1".to_string())]),
            };
            save_model(&path, &model, &file_meta).unwrap();
            let (loaded, meta) = load_model(&path).unwrap();
            assert_eq!(meta.manifest_sha256.as_deref(), Some("abc123"));
            assert_eq!(meta.attrs.get("variant").map(|s| s.as_str()), Some("M1"));
            assert_eq!(loaded.family(), model.family());
            assert_bit_identical(&model, &loaded, &train.x);
        }
    }

    #[test]
    fn stack_round_trips_with_nested_bases() {
        let data = blobs(30, 2, 2.0, 5);
        let bases = vec![
            BaseSpec::from(ModelSpec::Logreg { lambda: 0.01 }),
            BaseSpec {
                spec: ModelSpec::Logreg { lambda: 0.1 },
                columns: Some(vec![0]),
            },
        ];
        let (stack, _) = fit_stack(&bases, &data, 3, 2).unwrap();
        let model = TrainedModel::Stack(stack);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stack.model");
        save_model(&path, &model, &ModelFileMeta::default()).unwrap();
        let (loaded, meta) = load_model(&path).unwrap();
        assert!(meta.manifest_sha256.is_none());
        assert_bit_identical(&model, &loaded, &data.x);
    }

    #[test]
    fn ovr_round_trips_skipped_classes() {
        use crate::features::{FeatureVector, Variant};
        use crate::models::LabeledDataset;
        let features: Vec<FeatureVector> = (0..20)
            .map(|i| FeatureVector {
                values: vec![i as f64 / 10.0 - 1.0],
                variant: Variant::M1,
                labels: vec![if i < 10 { "a".into() } else { "b".into() }],
                weight: 1.0,
            })
            .collect();
        let data = LabeledDataset::from_features(
            &features,
            Some(vec!["a".into(), "b".into(), "ghost".into()]),
        )
        .unwrap();
        let model = ModelSpec::Ovr { lambda: 0.01 }.fit(&data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ovr.model");
        save_model(&path, &model, &ModelFileMeta::default()).unwrap();
        let (loaded, _) = load_model(&path).unwrap();
        match &loaded {
            TrainedModel::Ovr(m) => assert_eq!(m.skipped, vec!["ghost"]),
            other => panic!("wrong family {}", other.family()),
        }
        assert_bit_identical(&model, &loaded, &data.x);
    }

    #[test]
    fn truncated_file_errors() {
        let data = blobs(10, 2, 2.0, 1);
        let model = ModelSpec::Logreg { lambda: 0.1 }.fit(&data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        save_model(&path, &model, &ModelFileMeta::default()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.model");
        std::fs::write(&cut, &bytes[..bytes.len() - 9]).unwrap();
        assert!(load_model(&cut).is_err());
    }
}
