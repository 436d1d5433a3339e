use std::io::Write;

use lldpm_core::synth::{preprocess, PreprocessConfig};

use super::emit;
use crate::error::CliResult;
use crate::io::{read_rows, write_wide, Header};
use crate::PreprocessArgs;

pub fn run(args: PreprocessArgs, out: &mut dyn Write) -> CliResult<()> {
    let series = read_rows(&args.input)?;
    let cfg = PreprocessConfig {
        stride: args.stride,
        offset: args.offset,
    };
    let data = preprocess(&series, &cfg)?;
    let echo = serde_json::to_string(&cfg).expect("config serializes");
    write_wide(&args.out, &Header::new(0, echo), "data", &data)?;
    emit(out, &format!("{} units x {} times\n", data.n(), data.times()))
}
