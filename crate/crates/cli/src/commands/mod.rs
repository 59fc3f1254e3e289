mod corpus;
mod eval;
mod flair;
mod pretrain;
mod subword;
mod tasks;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;

use euslm_core::{corpus::ingest, Corpus, SubwordVocab};

use crate::args::Command;
use crate::CliError;

pub struct Ctx {
    pub out: PathBuf,
    pub seed: u64,
}

impl Ctx {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|source| CliError::File { path, source })
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(euslm_core::Error::from)?;
        s.push('\n');
        self.write(name, s)
    }
}

pub fn dispatch(ctx: &Ctx, command: &Command) -> Result<(), CliError> {
    match command {
        Command::Ingest(a) => corpus::ingest_files(ctx, a),
        Command::Stats(a) => corpus::stats(ctx, a),
        Command::Split(a) => corpus::split(ctx, a),
        Command::VocabTrain(a) => subword::vocab_train(ctx, a),
        Command::Tokenize(a) => subword::tokenize(ctx, a),
        Command::Fertility(a) => subword::fertility(ctx, a),
        Command::PretrainData(a) => pretrain::pretrain_data(ctx, a),
        Command::Pretrain(a) => pretrain::pretrain(ctx, a),
        Command::GradCheck(a) => pretrain::grad_check(ctx, a),
        Command::CharlmTrain(a) => flair::charlm_train(ctx, a),
        Command::Embed(a) => flair::embed(ctx, a),
        Command::TagTrain(a) => tasks::tag_train(ctx, a),
        Command::ClassifyTrain(a) => tasks::classify_train(ctx, a),
        Command::Finetune(a) => tasks::finetune(ctx, a),
        Command::Eval(a) => eval::eval(ctx, a),
        Command::Compare(a) => eval::compare(ctx, a),
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::File { path: path.to_path_buf(), source })
}

pub fn read_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::File { path: path.to_path_buf(), source })
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "corpus".into(), |s| s.to_string_lossy().into_owned())
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    Ok(ingest(open(path)?, &stem(path))?)
}

pub fn load_vocab(path: &Path) -> Result<SubwordVocab, CliError> {
    Ok(SubwordVocab::from_file_str(&read_string(path)?)?)
}
