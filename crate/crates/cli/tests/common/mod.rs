//! Fixture helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use readlab_core::corpus::{synth, write_dataset, Dataset};

pub fn binary() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_readlab"))
}

pub fn readlab(args: &[&str]) -> Output {
    Command::new(binary()).args(args).output().expect("spawn readlab")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn write_fixture(ds: &Dataset, root: &Path, name: &str) -> PathBuf {
    let dir = root.join(name);
    write_dataset(ds, &dir).expect("write fixture");
    dir
}

pub fn noisy_fixture(root: &Path, snippets: usize, developers: usize, seed: u64) -> PathBuf {
    let ds = synth::noisy(snippets, developers, 0.7, seed).expect("synthetic dataset");
    write_fixture(&ds, root, &format!("noisy-{snippets}x{developers}"))
}

pub fn unanimous_fixture(root: &Path, snippets: usize, developers: usize) -> PathBuf {
    let ds = synth::unanimous(snippets, developers, 1).expect("synthetic dataset");
    write_fixture(&ds, root, &format!("unanimous-{snippets}x{developers}"))
}
