// compare accumulate output and solve output against the CLI's histograms
fn main() {
    let file_pairs = wtstrike::spatial::read_pairs(
        std::fs::File::open("/tmp/ulpdir/out/pairs.bin").unwrap(),
    )
    .unwrap();
    let run = wtstrike::fit::iterative_fit(&file_pairs, &Default::default()).unwrap();
    let cli_hists: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string("/tmp/ulpdir/out/fit_histograms.json").unwrap(),
    )
    .unwrap();
    for (i, iteration) in run.iterations.iter().enumerate() {
        let cli_counts = cli_hists[i]["counts"].as_array().unwrap();
        let mismatches = iteration
            .histogram
            .counts
            .iter()
            .zip(cli_counts)
            .filter(|(a, b)| a.to_bits() != b.as_f64().unwrap().to_bits())
            .count();
        println!(
            "iter {i}: histogram count mismatches {mismatches}, fit amplitude bits {}",
            iteration.fit.params.amplitude().to_bits()
        );
    }
    let cli_fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string("/tmp/ulpdir/out/fit.json").unwrap())
            .unwrap();
    for it in cli_fit["iterations"].as_array().unwrap() {
        println!(
            "cli iter {}: amplitude bits {}",
            it["iteration"],
            it["params"]["amplitude"].as_f64().unwrap().to_bits()
        );
    }
}
