//! Resolved run configuration: the subcommand, its inputs and the full
//! training recipe, stored as a flat key=value file in each run directory.

use std::path::{Path, PathBuf};

use clickcfa::kv;
use clickcfa::recipe::TrainRecipe;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

use crate::args::{CommonArgs, GenerateArgs};
use crate::failure::Failure;

/// Keys that are command inputs rather than recipe fields, in file order.
pub const INPUT_KEYS: [&str; 7] = ["corpus", "recipe", "fold", "n", "archetypes", "fractions", "gram_n"];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub inputs: BTreeMap<String, String>,
    pub recipe: TrainRecipe,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            inputs: BTreeMap::new(),
            recipe: TrainRecipe::default(),
        }
    }

    pub fn load(path: &Path, command: &str) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::new(command);
        for e in kv::parse(&text)? {
            if e.key == "command" {
                if e.value != command {
                    return Err(Failure::Usage(format!(
                        "{} was written by `{}`, not `{command}`",
                        path.display(),
                        e.value
                    )));
                }
            } else if INPUT_KEYS.contains(&e.key.as_str()) {
                cfg.inputs.insert(e.key, e.value);
            } else if !cfg.recipe.set(&e.key, &e.value)? {
                return Err(Failure::Usage(format!(
                    "{}: unknown key `{}` on line {}",
                    path.display(),
                    e.key,
                    e.line
                )));
            }
        }
        Ok(cfg)
    }

    pub fn input(&self, key: &str) -> Option<&str> {
        self.inputs.get(key).map(String::as_str)
    }

    pub fn set_input(&mut self, key: &str, value: impl Into<String>) {
        self.inputs.insert(key.to_string(), value.into());
    }

    pub fn parse_input<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Failure> {
        self.input(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Failure::Usage(format!("`{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("command = {}\n", self.command);
        for key in INPUT_KEYS {
            if let Some(v) = self.inputs.get(key) {
                s.push_str(&format!("{key} = {v}\n"));
            }
        }
        s.push('\n');
        s.push_str(&self.recipe.to_kv());
        s
    }

    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn corpus_path(&self) -> Result<PathBuf, Failure> {
        self.input("corpus")
            .map(PathBuf::from)
            .ok_or_else(|| Failure::Usage("`--corpus` is required".into()))
    }
}

fn absolute(path: &Path) -> Result<String, Failure> {
    std::fs::canonicalize(path)
        .map(|p| p.display().to_string())
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

pub fn resolve_generate(a: &GenerateArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p, "generate")?,
        None => RunConfig::new("generate"),
    };
    if let Some(p) = &a.archetypes {
        cfg.set_input("archetypes", absolute(p)?);
    }
    if let Some(n) = a.n {
        cfg.set_input("n", n.to_string());
    }
    if let Some(s) = a.seed {
        cfg.recipe.seed = s;
    }
    Ok(cfg)
}

pub fn resolve_common(command: &str, a: &CommonArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p, command)?,
        None => RunConfig::new(command),
    };
    if let Some(p) = &a.corpus {
        cfg.set_input("corpus", absolute(p)?);
    }
    let r = &mut cfg.recipe;
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("`--set {kv}`: expected KEY=VALUE")))?;
        if !r.set(k.trim(), v.trim())? {
            return Err(Failure::Usage(format!("`--set`: unknown recipe key `{}`", k.trim())));
        }
    }
    if let Some(v) = a.seed {
        r.seed = v;
    }
    if let Some(v) = a.folds {
        r.n_folds = v;
    }
    if let Some(v) = a.epochs {
        r.epochs = v;
    }
    if let Some(v) = a.hidden_dim {
        r.hidden_dim = v;
    }
    if let Some(v) = a.lr {
        r.lr = v;
    }
    if let Some(v) = a.meta_lr {
        r.meta_lr = v;
    }
    if let Some(v) = a.pretrain_epochs {
        r.pretrain_epochs = v;
    }
    if let Some(v) = &a.recipe {
        cfg.set_input("recipe", v.clone());
    }
    if let Some(v) = a.fold {
        cfg.set_input("fold", v.to_string());
    }
    if let Some(v) = &a.fractions {
        cfg.set_input("fractions", v.clone());
    }
    if let Some(v) = a.gram_n {
        cfg.set_input("gram_n", v.to_string());
    }
    // The named method fixes the model and its toggles.
    if let Some(name) = cfg.input("recipe").filter(|n| *n != "all").map(str::to_string) {
        cfg.recipe = TrainRecipe::preset(&name, &cfg.recipe)?;
    }
    cfg.recipe.validate()?;
    Ok(cfg)
}
