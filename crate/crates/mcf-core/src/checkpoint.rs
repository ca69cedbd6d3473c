//! Model checkpoints: a flat binary file of 32-bit little-endian
//! parameter values in store order, plus a text manifest carrying the
//! model configuration and the ordered parameter names and shapes.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::encoder::EncoderVariant;
use crate::error::{McfError, Result};
use crate::model::{Geometry, McfConfig, McfModel, Streams, Task};

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".manifest");
    PathBuf::from(os)
}

/// Write the checkpoint pair (binary values + manifest).
pub fn save(model: &McfModel, path: &Path) -> Result<()> {
    let cfg = &model.config;
    let g = &cfg.geometry;
    let mut manifest = String::new();
    manifest.push_str("format = mcf-checkpoint-v1\n");
    manifest.push_str(&format!("variant = {}\n", cfg.variant.as_str()));
    manifest.push_str(&format!("layers = {}\n", cfg.layers));
    manifest.push_str(&format!("heads = {}\n", cfg.heads));
    manifest.push_str(&format!("d_model = {}\n", cfg.d_model));
    manifest.push_str(&format!("task = {}\n", cfg.task.as_str()));
    manifest.push_str(&format!("n_disc = {}\n", cfg.n_disc));
    manifest.push_str(&format!("dropout = {}\n", cfg.dropout_p));
    manifest.push_str(&format!("streams = {}\n", cfg.streams.as_str()));
    manifest.push_str(&format!(
        "head_hidden = {}\n",
        cfg.head_hidden.map_or("none".to_string(), |h| h.to_string())
    ));
    manifest.push_str(&format!("freeze_pe_adapter = {}\n", cfg.freeze_pe_adapter));
    for (name, v) in [
        ("t_pe", g.t_pe),
        ("d_pe", g.d_pe),
        ("t_fg", g.t_fg),
        ("d_fg", g.d_fg),
        ("t_vs", g.t_vs),
        ("d_vs", g.d_vs),
    ] {
        manifest.push_str(&format!("{name} = {v}\n"));
    }
    manifest.push_str(&format!("seed = {}\n", model.seed));
    manifest.push_str("[params]\n");
    let mut bin = Vec::new();
    for p in model.store.iter() {
        let dims: Vec<String> = p.value.shape().iter().map(|d| d.to_string()).collect();
        manifest.push_str(&format!("{} {}\n", p.name, dims.join("x")));
        for &v in p.value.data() {
            bin.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    atomic_write(path, &bin)?;
    atomic_write(&manifest_path(path), manifest.as_bytes())?;
    Ok(())
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn get<'a>(kv: &'a [(String, String)], key: &str) -> Result<&'a str> {
    kv.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| McfError::Config(format!("checkpoint manifest missing key '{key}'")))
}

fn parse_num<T: std::str::FromStr>(kv: &[(String, String)], key: &str) -> Result<T> {
    get(kv, key)?
        .parse()
        .map_err(|_| McfError::Config(format!("checkpoint manifest key '{key}' is not numeric")))
}

/// Load a checkpoint pair back into a model.
pub fn load(path: &Path) -> Result<McfModel> {
    let manifest = fs::read_to_string(manifest_path(path))?;
    let mut kv = Vec::new();
    let mut param_lines = Vec::new();
    let mut in_params = false;
    for line in manifest.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "[params]" {
            in_params = true;
            continue;
        }
        if in_params {
            param_lines.push(line.to_string());
        } else if let Some((k, v)) = line.split_once('=') {
            kv.push((k.trim().to_string(), v.trim().to_string()));
        } else {
            return Err(McfError::Config(format!("malformed manifest line '{line}'")));
        }
    }
    if get(&kv, "format")? != "mcf-checkpoint-v1" {
        return Err(McfError::Config("unknown checkpoint format".into()));
    }
    let head_hidden = match get(&kv, "head_hidden")? {
        "none" => None,
        s => Some(s.parse().map_err(|_| McfError::Config("bad head_hidden".into()))?),
    };
    let config = McfConfig {
        variant: EncoderVariant::parse(get(&kv, "variant")?)?,
        layers: parse_num(&kv, "layers")?,
        heads: parse_num(&kv, "heads")?,
        d_model: parse_num(&kv, "d_model")?,
        task: Task::parse(get(&kv, "task")?)?,
        n_disc: parse_num(&kv, "n_disc")?,
        dropout_p: parse_num(&kv, "dropout")?,
        streams: Streams::parse(get(&kv, "streams")?)?,
        head_hidden,
        geometry: Geometry {
            t_pe: parse_num(&kv, "t_pe")?,
            d_pe: parse_num(&kv, "d_pe")?,
            t_fg: parse_num(&kv, "t_fg")?,
            d_fg: parse_num(&kv, "d_fg")?,
            t_vs: parse_num(&kv, "t_vs")?,
            d_vs: parse_num(&kv, "d_vs")?,
        },
        freeze_pe_adapter: get(&kv, "freeze_pe_adapter")? == "true",
    };
    let seed: u64 = parse_num(&kv, "seed")?;
    let mut model = McfModel::new(config, seed)?;

    // The manifest must list exactly the parameters the rebuilt model has.
    if param_lines.len() != model.store.len() {
        return Err(McfError::FieldMismatch {
            field: "params".into(),
            detail: format!(
                "manifest lists {} tensors, model has {}",
                param_lines.len(),
                model.store.len()
            ),
        });
    }
    let mut expected_floats = 0usize;
    for (line, p) in param_lines.iter().zip(model.store.iter()) {
        let (name, shape_s) = line
            .rsplit_once(' ')
            .ok_or_else(|| McfError::Config(format!("malformed parameter line '{line}'")))?;
        let dims: Vec<usize> = shape_s
            .split('x')
            .map(|d| d.parse().map_err(|_| McfError::Config(format!("bad shape '{shape_s}'"))))
            .collect::<Result<_>>()?;
        if name != p.name || dims != p.value.shape() {
            return Err(McfError::FieldMismatch {
                field: name.to_string(),
                detail: format!(
                    "manifest has {name} {shape_s}, model expects {} {:?}",
                    p.name,
                    p.value.shape()
                ),
            });
        }
        expected_floats += p.value.numel();
    }
    let mut bin = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bin)?;
    if bin.len() != expected_floats * 4 {
        return Err(McfError::Truncated(format!(
            "checkpoint holds {} bytes, manifest implies {}",
            bin.len(),
            expected_floats * 4
        )));
    }
    let mut off = 0;
    for p in model.store.iter_mut() {
        for v in p.value.data_mut() {
            let b = &bin[off..off + 4];
            *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
            off += 4;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Mode;
    use crate::rng::RngState;
    use crate::tensor::Tensor;

    fn toy_model() -> McfModel {
        let cfg = McfConfig {
            variant: EncoderVariant::SagMhaEnc,
            layers: 2,
            heads: 2,
            d_model: 16,
            task: Task::MultilabelCont,
            n_disc: 4,
            dropout_p: 0.1,
            streams: Streams::Both,
            head_hidden: Some(8),
            geometry: Geometry::toy(),
            freeze_pe_adapter: true,
        };
        McfModel::new(cfg, 21).unwrap()
    }

    #[test]
    fn save_load_round_trip_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = toy_model();
        save(&model, &path).unwrap();
        let loaded = load(&path).unwrap();

        let g = Geometry::toy();
        let mut rng = RngState::new(4);
        let mut mk = |t: usize, d: usize| {
            let mut x = Tensor::zeros(&[t, d]);
            for v in x.data_mut() {
                *v = rng.next_gaussian();
            }
            x
        };
        let sample = crate::model::StreamSample {
            e_pe: mk(g.t_pe, g.d_pe),
            e_fg: mk(g.t_fg, g.d_fg),
            e_vs: mk(g.t_vs, g.d_vs),
            fg_mask: vec![true; g.t_fg],
        };
        let mut r1 = RngState::new(0);
        let mut r2 = RngState::new(0);
        let a = model.forward(&sample, Mode::Eval, &mut r1).unwrap();
        let b = loaded.forward(&sample, Mode::Eval, &mut r2).unwrap();
        // Values pass through f32 on disk; both paths saw the same rounding
        // only on the loaded side, so compare within f32 resolution.
        assert!(a.disc_logits.max_abs_diff(&b.disc_logits) < 1e-4);
        assert_eq!(loaded.config.head_hidden, Some(8));
        assert!(!loaded.store.get(loaded.adapter_pe.w).trainable);
    }

    #[test]
    fn second_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let model = toy_model();
        save(&model, &p1).unwrap();
        let loaded = load(&p1).unwrap();
        save(&loaded, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(
            fs::read(manifest_path(&p1)).unwrap(),
            fs::read(manifest_path(&p2)).unwrap()
        );
    }

    #[test]
    fn truncated_checkpoint_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = toy_model();
        save(&model, &path).unwrap();
        let data = fs::read(&path).unwrap();
        fs::write(&path, &data[..data.len() - 4]).unwrap();
        assert!(matches!(load(&path), Err(McfError::Truncated(_))));
    }
}
