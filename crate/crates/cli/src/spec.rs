//! Manifold spec files.
//!
//! ```json
//! {"kind": "warped_product", "base_dim": 1, "sigma": "1",
//!  "warp": "exp(-t^2)", "fiber_dim": 2, "fiber_volume": 12.566370614359172}
//! ```
//!
//! `warp`, `fiber_dim` and `fiber_volume` default to `"1"`, `0` and `1`.
//! A `submersion` spec replaces them with `fiber_volume_fn` and an optional
//! `claimed_bound`. Unknown keys, and keys belonging to the other kind, are
//! rejected.

use std::path::Path;

use pcap_core::{ModelManifold, ProfileExpr, SubmersionSpec};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    WarpedProduct,
    Submersion,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::WarpedProduct => "warped_product",
            Kind::Submersion => "submersion",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecOptions {
    #[serde(rename = "T_max", alias = "t_max")]
    pub t_max: Option<f64>,
    pub rel_tol: Option<f64>,
    pub margin: Option<f64>,
    pub grid_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub kind: Kind,
    pub base_dim: u32,
    pub sigma: String,
    pub warp: Option<String>,
    pub fiber_dim: Option<u32>,
    pub fiber_volume: Option<f64>,
    pub fiber_volume_fn: Option<String>,
    pub claimed_bound: Option<f64>,
    pub inner_radius: Option<f64>,
    #[serde(default)]
    pub options: SpecOptions,
}

/// A validated spec, ready for the numerical core.
#[derive(Debug, Clone)]
pub enum Manifold {
    Warped(ModelManifold),
    Submersion(SubmersionSpec),
}

impl Manifold {
    pub fn kind(&self) -> Kind {
        match self {
            Manifold::Warped(_) => Kind::WarpedProduct,
            Manifold::Submersion(_) => Kind::Submersion,
        }
    }

    /// The manifold whose criterion is computed directly: the warped
    /// product itself, or the base of a submersion.
    pub fn model(&self) -> &ModelManifold {
        match self {
            Manifold::Warped(m) => m,
            Manifold::Submersion(s) => s.base_manifold(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedSpec {
    pub file: SpecFile,
    pub manifold: Manifold,
}

pub fn load(path: &Path) -> Result<LoadedSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<LoadedSpec, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: SpecFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path.is_empty() || path == "." {
            CliError::Spec(inner.to_string())
        } else {
            CliError::Spec(format!("key `{path}`: {inner}"))
        }
    })?;
    let manifold = build(&file)?;
    Ok(LoadedSpec { file, manifold })
}

fn expression(key: &str, text: &str) -> Result<ProfileExpr, CliError> {
    ProfileExpr::parse(text).map_err(|e| CliError::Spec(format!("key `{key}`: {e}")))
}

fn reject(kind: Kind, keys: &[(&str, bool)]) -> Result<(), CliError> {
    match keys.iter().find(|(_, present)| *present) {
        Some((key, _)) => Err(CliError::Spec(format!(
            "key `{key}` is not valid for kind {}",
            kind.as_str()
        ))),
        None => Ok(()),
    }
}

fn build(f: &SpecFile) -> Result<Manifold, CliError> {
    let sigma = expression("sigma", &f.sigma)?;
    let inner_radius = f.inner_radius.unwrap_or(1.0);
    let invalid = |e: &dyn std::fmt::Display| CliError::Spec(e.to_string());
    match f.kind {
        Kind::WarpedProduct => {
            reject(
                f.kind,
                &[
                    ("fiber_volume_fn", f.fiber_volume_fn.is_some()),
                    ("claimed_bound", f.claimed_bound.is_some()),
                ],
            )?;
            let warp = expression("warp", f.warp.as_deref().unwrap_or("1"))?;
            ModelManifold::with_inner_radius(
                f.base_dim,
                sigma,
                warp,
                f.fiber_dim.unwrap_or(0),
                f.fiber_volume.unwrap_or(1.0),
                inner_radius,
            )
            .map(Manifold::Warped)
            .map_err(|e| invalid(&e))
        }
        Kind::Submersion => {
            reject(
                f.kind,
                &[
                    ("warp", f.warp.is_some()),
                    ("fiber_dim", f.fiber_dim.is_some()),
                    ("fiber_volume", f.fiber_volume.is_some()),
                ],
            )?;
            let v = f.fiber_volume_fn.as_deref().ok_or_else(|| {
                CliError::Spec("missing key `fiber_volume_fn` for kind submersion".into())
            })?;
            let v = expression("fiber_volume_fn", v)?;
            SubmersionSpec::new(f.base_dim, sigma, v, f.claimed_bound, inner_radius)
                .map(Manifold::Submersion)
                .map_err(|e| invalid(&e))
        }
    }
}
