//! Run configuration: flat dotted keys with defaults, overridable from a
//! JSON file and then from flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::Value;
use sha2::{Digest, Sha256};

use vqmimo_core::channel::ChannelConfig;
use vqmimo_core::model::{ArchitectureSpec, ConvLayer};
use vqmimo_core::train::TrainConfig;
use vqmimo_core::{Error, Result};

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

pub const KEYS: &[Key] = &[
    Key {
        name: "seed",
        default: "0",
        help: "dataset / link-noise seed for gen, sweep and ood",
    },
    Key {
        name: "channel.num_antennas",
        default: "4",
        help: "receive antennas modeled",
    },
    Key {
        name: "channel.antenna_spacing",
        default: "0.5",
        help: "ULA spacing in wavelengths",
    },
    Key {
        name: "channel.carrier_hz",
        default: "40000000000",
        help: "carrier frequency",
    },
    Key {
        name: "channel.subcarrier_spacing_hz",
        default: "15000",
        help: "OFDM subcarrier spacing",
    },
    Key {
        name: "channel.num_subcarriers",
        default: "64",
        help: "subcarriers F",
    },
    Key {
        name: "channel.num_symbols",
        default: "16",
        help: "OFDM symbols T",
    },
    Key {
        name: "channel.delay_spread_s",
        default: "0.00000003",
        help: "RMS delay spread",
    },
    Key {
        name: "channel.max_doppler_hz",
        default: "30",
        help: "maximum Doppler shift",
    },
    Key {
        name: "channel.observed",
        default: "0,1",
        help: "observed antenna indices",
    },
    Key {
        name: "channel.predicted",
        default: "2,3",
        help: "predicted antenna indices",
    },
    Key {
        name: "arch.encoder",
        default: "32:3:2:1,64:3:2:1,64:1:1:0",
        help: "encoder layers out:kernel:stride:padding; decoder mirrors it",
    },
    Key {
        name: "arch.codebook_size",
        default: "512",
        help: "VQ-VAE codebook entries",
    },
    Key {
        name: "train.lr",
        default: "0.001",
        help: "Adam learning rate",
    },
    Key {
        name: "train.batch_size",
        default: "32",
        help: "mini-batch size",
    },
    Key {
        name: "train.epochs",
        default: "30",
        help: "training epochs",
    },
    Key {
        name: "train.kl_weight",
        default: "0.000025",
        help: "VAE KL weight",
    },
    Key {
        name: "train.commit_beta",
        default: "0.25",
        help: "VQ-VAE commitment weight",
    },
    Key {
        name: "train.seed",
        default: "0",
        help: "initialization and shuffling seed",
    },
    Key {
        name: "train.noise_aware",
        default: "off",
        help: "training link SNR range lo,hi in dB, or off",
    },
    Key {
        name: "gen.samples",
        default: "2048",
        help: "samples written by gen",
    },
    Key {
        name: "eval.snr",
        default: "-10,-5,0,5,10,20,30,off",
        help: "sweep SNR list in dB",
    },
    Key {
        name: "eval.ood_samples",
        default: "200",
        help: "test samples per OOD profile",
    },
    Key {
        name: "bench.iters",
        default: "100",
        help: "timed inference iterations",
    },
    Key {
        name: "bench.warmup",
        default: "10",
        help: "discarded warm-up iterations",
    },
];

/// Text listing every key and its default, for `--help`.
pub fn keys_help() -> String {
    let mut s =
        String::from("Configuration keys (JSON file with flat dotted keys, or --set key=value):\n");
    for k in KEYS {
        let _ = writeln!(
            s,
            "  {:<32} {:<28} {}",
            k.name,
            format!("[default: {}]", k.default),
            k.help
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

fn key(name: &str) -> Result<&'static Key> {
    KEYS.iter()
        .find(|k| k.name == name)
        .ok_or_else(|| Error::Config(format!("unknown configuration key `{name}`")))
}

fn render(name: &str, v: &Value) -> Result<String> {
    match v {
        Value::Number(n) => Ok(n.to_string()),
        Value::String(s) => Ok(s.clone()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Null => Ok("off".into()),
        Value::Array(items) => items
            .iter()
            .map(|x| match x {
                Value::Number(n) => Ok(n.to_string()),
                Value::String(s) => Ok(s.clone()),
                _ => Err(Error::Config(format!(
                    "`{name}`: array items must be numbers or strings"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(|v| v.join(",")),
        Value::Object(_) => Err(Error::Config(format!(
            "`{name}`: nested objects are not allowed; use flat dotted keys"
        ))),
    }
}

fn parse<T: std::str::FromStr>(name: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{name}`: cannot parse `{v}`")))
}

fn parse_list<T: std::str::FromStr>(name: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|t| parse(name, t)).collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS
                .iter()
                .map(|k| (k.name, k.default.to_string()))
                .collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, name: &str, value: impl Into<String>) -> Result<()> {
        let k = key(name)?;
        self.values.insert(k.name, value.into());
        Ok(())
    }

    /// Apply `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{pair}`")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn merge_json(&mut self, text: &str) -> Result<()> {
        let doc: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))?;
        let Value::Object(map) = doc else {
            return Err(Error::Config("config file must hold a JSON object".into()));
        };
        for (k, v) in &map {
            let rendered = render(k, v)?;
            self.set(k, rendered)?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> &str {
        self.values
            .get(name)
            .unwrap_or_else(|| panic!("configuration key `{name}` is not registered"))
    }

    pub fn num<T: std::str::FromStr>(&self, name: &str) -> Result<T> {
        parse(name, self.get(name))
    }

    pub fn full_scale(&mut self) {
        let fs = ChannelConfig::full_scale();
        for (k, v) in [
            ("channel.num_antennas", fs.num_antennas),
            ("channel.num_subcarriers", fs.num_subcarriers),
            ("channel.num_symbols", fs.num_symbols),
        ] {
            self.values
                .insert(key(k).expect("registered").name, v.to_string());
        }
    }

    pub fn channel(&self) -> Result<ChannelConfig> {
        let c = ChannelConfig {
            num_antennas: self.num("channel.num_antennas")?,
            antenna_spacing: self.num("channel.antenna_spacing")?,
            carrier_hz: self.num("channel.carrier_hz")?,
            subcarrier_spacing_hz: self.num("channel.subcarrier_spacing_hz")?,
            num_subcarriers: self.num("channel.num_subcarriers")?,
            num_symbols: self.num("channel.num_symbols")?,
            delay_spread_s: self.num("channel.delay_spread_s")?,
            max_doppler_hz: self.num("channel.max_doppler_hz")?,
            observed: parse_list("channel.observed", self.get("channel.observed"))?,
            predicted: parse_list("channel.predicted", self.get("channel.predicted"))?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let na = self.get("train.noise_aware").trim();
        let noise_aware = if na.eq_ignore_ascii_case("off") || na.is_empty() {
            None
        } else {
            match parse_list::<f64>("train.noise_aware", na)?.as_slice() {
                [lo, hi] => Some((*lo, *hi)),
                _ => return Err(Error::Config("`train.noise_aware` takes lo,hi".into())),
            }
        };
        let t = TrainConfig {
            lr: self.num("train.lr")?,
            batch_size: self.num("train.batch_size")?,
            epochs: self.num("train.epochs")?,
            kl_weight: self.num("train.kl_weight")?,
            commit_beta: self.num("train.commit_beta")?,
            seed: self.num("train.seed")?,
            noise_aware,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn encoder(&self) -> Result<Vec<ConvLayer>> {
        let name = "arch.encoder";
        self.get(name)
            .split(',')
            .map(
                |layer| match parse_list::<usize>(name, &layer.replace(':', ","))?.as_slice() {
                    [out, k, s, p] => Ok(ConvLayer::new(*out, *k, *s, *p)),
                    _ => Err(Error::Config(format!(
                        "`{name}`: layer `{layer}` is not out:kernel:stride:padding"
                    ))),
                },
            )
            .collect()
    }

    /// Architecture for `channel`'s antenna split and grid.
    pub fn arch(&self, channel: &ChannelConfig) -> Result<ArchitectureSpec> {
        let encoder = self.encoder()?;
        let latent_dim = encoder.last().map(|l| l.out_channels).unwrap_or(0);
        ArchitectureSpec::mirrored(
            [
                2 * channel.m_s(),
                channel.num_subcarriers,
                channel.num_symbols,
            ],
            2 * channel.m_r(),
            latent_dim,
            self.num("arch.codebook_size")?,
            &encoder,
        )
    }

    /// First 16 hex digits of the SHA-256 of the resolved `key=value` lines.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
