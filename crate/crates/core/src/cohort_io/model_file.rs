//! JSON model files tagged with a top-level `scheme` field.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::catchup::CatchupModel;
use crate::charts::MarginalChart;
use crate::conditional::ConditionalModel;

pub const MARGINAL_SCHEME: &str = "marginal-v1";
pub const CONDITIONAL_SCHEME: &str = "conditional-v1";
pub const CATCHUP_SCHEME: &str = "catchup-v1";

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unknown model scheme `{0}`")]
    UnknownScheme(String),
    #[error("expected a {expected} model, file holds {found}")]
    TypeMismatch { expected: &'static str, found: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Marginal(MarginalChart<f64>),
    Conditional(ConditionalModel),
    Catchup(CatchupModel),
}

impl ModelFile {
    pub fn scheme(&self) -> &'static str {
        match self {
            ModelFile::Marginal(_) => MARGINAL_SCHEME,
            ModelFile::Conditional(_) => CONDITIONAL_SCHEME,
            ModelFile::Catchup(_) => CATCHUP_SCHEME,
        }
    }
}

impl From<MarginalChart<f64>> for ModelFile {
    fn from(m: MarginalChart<f64>) -> Self {
        ModelFile::Marginal(m)
    }
}

impl From<ConditionalModel> for ModelFile {
    fn from(m: ConditionalModel) -> Self {
        ModelFile::Conditional(m)
    }
}

impl From<CatchupModel> for ModelFile {
    fn from(m: CatchupModel) -> Self {
        ModelFile::Catchup(m)
    }
}

fn schema(path: &str, message: impl ToString) -> ModelIoError {
    ModelIoError::Schema {
        path: path.to_string(),
        message: message.to_string(),
    }
}

fn tagged<M: Serialize>(scheme: &str, model: &M) -> Result<Value, ModelIoError> {
    let mut v = serde_json::to_value(model).map_err(|e| schema("", e))?;
    let obj = v.as_object_mut().ok_or_else(|| schema("", "model did not serialize to an object"))?;
    obj.insert("scheme".into(), Value::String(scheme.into()));
    Ok(v)
}

/// Writes the model as pretty-printed JSON. Floats are written in the
/// shortest form that reads back to the same double.
pub fn save_model<W: Write>(model: &ModelFile, mut sink: W) -> Result<(), ModelIoError> {
    let v = match model {
        ModelFile::Marginal(m) => tagged(MARGINAL_SCHEME, m)?,
        ModelFile::Conditional(m) => tagged(CONDITIONAL_SCHEME, m)?,
        ModelFile::Catchup(m) => tagged(CATCHUP_SCHEME, m)?,
    };
    serde_json::to_writer_pretty(&mut sink, &v).map_err(|e| schema("", e))?;
    sink.write_all(b"\n")?;
    Ok(())
}

fn read_tagged<R: Read>(mut source: R) -> Result<(String, Value), ModelIoError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| schema("", e))?;
    let obj = v.as_object_mut().ok_or_else(|| schema("", "expected a JSON object"))?;
    let scheme = match obj.remove("scheme") {
        Some(Value::String(s)) => s,
        Some(_) => return Err(schema("scheme", "expected a string")),
        None => return Err(schema("scheme", "missing field")),
    };
    Ok((scheme, v))
}

fn body<M: DeserializeOwned>(v: Value) -> Result<M, ModelIoError> {
    serde_path_to_error::deserialize(v).map_err(|e| schema(&e.path().to_string(), e.inner()))
}

pub fn load_model<R: Read>(source: R) -> Result<ModelFile, ModelIoError> {
    let (scheme, v) = read_tagged(source)?;
    match scheme.as_str() {
        MARGINAL_SCHEME => body(v).map(ModelFile::Marginal),
        CONDITIONAL_SCHEME => body(v).map(ModelFile::Conditional),
        CATCHUP_SCHEME => body(v).map(ModelFile::Catchup),
        _ => Err(ModelIoError::UnknownScheme(scheme)),
    }
}

fn load_as<R: Read, M>(
    source: R,
    expected: &'static str,
    pick: impl FnOnce(ModelFile) -> Option<M>,
) -> Result<M, ModelIoError> {
    let (scheme, v) = read_tagged(source)?;
    if scheme != expected {
        if ![MARGINAL_SCHEME, CONDITIONAL_SCHEME, CATCHUP_SCHEME].contains(&scheme.as_str()) {
            return Err(ModelIoError::UnknownScheme(scheme));
        }
        return Err(ModelIoError::TypeMismatch { expected, found: scheme });
    }
    let model = match expected {
        MARGINAL_SCHEME => ModelFile::Marginal(body(v)?),
        CONDITIONAL_SCHEME => ModelFile::Conditional(body(v)?),
        _ => ModelFile::Catchup(body(v)?),
    };
    Ok(pick(model).expect("scheme checked"))
}

pub fn load_marginal<R: Read>(source: R) -> Result<MarginalChart<f64>, ModelIoError> {
    load_as(source, MARGINAL_SCHEME, |m| match m {
        ModelFile::Marginal(c) => Some(c),
        _ => None,
    })
}

pub fn load_conditional<R: Read>(source: R) -> Result<ConditionalModel, ModelIoError> {
    load_as(source, CONDITIONAL_SCHEME, |m| match m {
        ModelFile::Conditional(c) => Some(c),
        _ => None,
    })
}

pub fn load_catchup<R: Read>(source: R) -> Result<CatchupModel, ModelIoError> {
    load_as(source, CATCHUP_SCHEME, |m| match m {
        ModelFile::Catchup(c) => Some(c),
        _ => None,
    })
}
