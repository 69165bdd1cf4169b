//! Textual schedule grammar.
//!
//! A schedule is a variant name followed by optional `key=value` pairs,
//! whitespace separated:
//!
//! ```text
//! ista
//! constant alpha=0.3
//! fista-bt
//! chambolle-dossal a=3
//! capped inner=fista-bt cap=0.99
//! adre inner=fista-bt
//! adopt inner=fista-bt
//! ifbs-opt                 (resolved against the reference solution)
//! ista-opt                 (alpha = 0, lambda = 2/(L + l_E))
//! ```
//!
//! Any variant accepts `lambda=<positive float>` to override the default
//! `1/L` step size. `ifbs-opt` and `ista-opt` need instance diagnostics
//! (the restricted Gram spectrum), so they are only available where a
//! reference solution is in scope.

use std::collections::BTreeMap;

use ifbs::schedule::{MomentumSpec, ScheduleSpec, StepRule};

/// A parsed schedule request; `Opt`-variants still need per-instance
/// resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleRequest {
    Concrete(ScheduleSpec<f64>),
    /// Constant momentum `(1 - sqrt(l_E lambda)) / (1 + sqrt(l_E lambda))`.
    IfbsOpt { lambda: Option<f64> },
    /// Momentum-free with the diagnostic step size `2 / (L + l_E)`.
    IstaOpt,
}

impl ScheduleRequest {
    pub fn needs_instance_diagnostics(&self) -> bool {
        !matches!(self, ScheduleRequest::Concrete(_))
    }

    /// True when the built schedule will want the instance's Gram matrix at
    /// run time (the opt-switch estimator).
    pub fn wants_gram_source(&self) -> bool {
        matches!(
            self,
            ScheduleRequest::Concrete(ScheduleSpec {
                momentum: MomentumSpec::OptSwitch { .. },
                ..
            })
        )
    }
}

pub fn parse_schedule(text: &str) -> Result<ScheduleRequest, String> {
    let mut tokens = text.split_whitespace();
    let variant = tokens.next().ok_or("empty schedule specification")?;
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for tok in tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{tok}`"))?;
        if kv.insert(k.to_string(), v.to_string()).is_some() {
            return Err(format!("duplicate key `{k}`"));
        }
    }

    let parse_f64 = |kv: &BTreeMap<String, String>, key: &str| -> Result<Option<f64>, String> {
        match kv.get(key) {
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|e| format!("bad value for `{key}`: {e}")),
            None => Ok(None),
        }
    };

    let lambda = parse_f64(&kv, "lambda")?;
    let step = match lambda {
        Some(v) if v > 0.0 => StepRule::Fixed(v),
        Some(v) => return Err(format!("lambda must be positive, got {v}")),
        None => StepRule::InverseLipschitz,
    };

    let inner_momentum = |kv: &BTreeMap<String, String>| -> Result<MomentumSpec<f64>, String> {
        let name = kv
            .get("inner")
            .map(String::as_str)
            .unwrap_or("fista-bt");
        match name {
            "fista-bt" => Ok(MomentumSpec::FistaBt),
            "chambolle-dossal" => Ok(MomentumSpec::ChambolleDossal {
                a: parse_f64(kv, "a")?.unwrap_or(3.0),
            }),
            other => Err(format!(
                "unsupported inner recursion `{other}` (use fista-bt or chambolle-dossal)"
            )),
        }
    };

    let known_keys: &[&str] = &["lambda", "alpha", "a", "cap", "inner"];
    if let Some(unknown) = kv.keys().find(|k| !known_keys.contains(&k.as_str())) {
        return Err(format!("unknown key `{unknown}`"));
    }

    let spec = match variant {
        "ista" => ScheduleSpec {
            momentum: MomentumSpec::Constant { alpha: 0.0 },
            step,
        },
        "constant" => {
            let alpha = parse_f64(&kv, "alpha")?
                .ok_or("constant schedule requires alpha=<value>")?;
            ScheduleSpec {
                momentum: MomentumSpec::Constant { alpha },
                step,
            }
        }
        "fista-bt" => ScheduleSpec {
            momentum: MomentumSpec::FistaBt,
            step,
        },
        "chambolle-dossal" => ScheduleSpec {
            momentum: MomentumSpec::ChambolleDossal {
                a: parse_f64(&kv, "a")?.unwrap_or(3.0),
            },
            step,
        },
        "capped" => {
            let cap = parse_f64(&kv, "cap")?.ok_or("capped schedule requires cap=<value>")?;
            ScheduleSpec {
                momentum: MomentumSpec::Capped {
                    inner: Box::new(inner_momentum(&kv)?),
                    cap,
                },
                step,
            }
        }
        "adre" | "adaptive-restart" => ScheduleSpec {
            momentum: MomentumSpec::AdaptiveRestart {
                inner: Box::new(inner_momentum(&kv)?),
            },
            step,
        },
        "adopt" | "opt-switch" => ScheduleSpec {
            momentum: MomentumSpec::OptSwitch {
                inner: Box::new(inner_momentum(&kv)?),
            },
            step,
        },
        "ifbs-opt" => return Ok(ScheduleRequest::IfbsOpt { lambda }),
        "ista-opt" => {
            if lambda.is_some() {
                return Err("ista-opt derives its own step size; lambda= not accepted".into());
            }
            return Ok(ScheduleRequest::IstaOpt);
        }
        other => return Err(format!("unknown schedule variant `{other}`")),
    };
    Ok(ScheduleRequest::Concrete(spec))
}
