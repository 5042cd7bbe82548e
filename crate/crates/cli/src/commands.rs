use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use vortex::bench::{
    compare_extractors, encode_ids, generate_synthetic, reports_to_csv, run_protocol, run_protocol_on_table,
    soup_ablation, BenchConfig, DescriptorTable, RunReport, SyntheticTextureSpec,
};
use vortex::classifiers::{classifier_registry, load_model, save_model, LabeledSet, Standardizer};
use vortex::extractors::extractor_registry;
use vortex::interchange::{
    load_manifest, read_vtd, save_manifest, write_vte, VtdWriter, VteIndex, VTD_MAGIC, VTE_MAGIC,
};
use vortex::DescriptorRecord;

use crate::error::{CliError, CliResult, Exit};

pub fn check_classifier(name: &str) -> CliResult<()> {
    let registry = classifier_registry();
    if registry.contains(name) {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "unknown classifier {name:?} (expected one of: {})",
            registry.names().join(", ")
        )))
    }
}

pub fn check_extractor(name: &str) -> CliResult<()> {
    let registry = extractor_registry();
    if registry.contains(name) {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "unknown extractor {name:?} (expected one of: {})",
            registry.names().join(", ")
        )))
    }
}

/// Parses `1..31`, `1-31`, `1,2,4,8` or a mix such as `1..4,8,16`.
/// Ranges are inclusive. The result is sorted and deduplicated.
pub fn parse_m_list(text: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bounds = part.split_once("..").or_else(|| part.split_once('-'));
        let num = |s: &str| {
            s.trim()
                .trim_start_matches('=')
                .parse::<usize>()
                .map_err(|_| format!("bad soup size {s:?} in {text:?}"))
        };
        match bounds {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty range {part:?}"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    if out.is_empty() || out.contains(&0) {
        return Err(format!("soup sizes must be positive integers, got {text:?}"));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::new(Exit::Io, format!("cannot create {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

pub struct EncodeArgs<'a> {
    pub input: &'a Path,
    pub output: &'a Path,
    pub extractor: &'a str,
    pub manifest: Option<&'a Path>,
}

/// Encodes every record of a VTE file into a VTD file, in file order.
pub fn encode(args: EncodeArgs<'_>, config: &BenchConfig) -> CliResult<usize> {
    let extractor = extractor_registry().build(args.extractor, &config.extractor)?;
    let manifest = args.manifest.map(load_manifest).transpose()?;
    let index = VteIndex::build(args.input)?;
    if index.is_empty() {
        log::warn!("{} holds no records; writing an empty descriptor file", args.input.display());
    }
    let ids: Vec<String> = index.entries().iter().map(|e| e.image_id.clone()).collect();
    let table = encode_ids(&index, &ids, extractor.as_ref())?;
    let mut writer = VtdWriter::new(create(args.output)?)?;
    for id in &ids {
        let label = manifest
            .as_ref()
            .and_then(|m| m.label(id))
            .map_or(-1, |l| l as i32);
        let features = table.get(id).expect("every indexed id was encoded").to_vec();
        writer.write(&DescriptorRecord::new(id.clone(), label, features))?;
    }
    writer.finish()?;
    log::info!("encoded {} records with {}", ids.len(), extractor.label());
    Ok(ids.len())
}

fn magic(path: &Path) -> CliResult<[u8; 4]> {
    let mut buf = [0u8; 4];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut buf))
        .map_err(|e| CliError::new(Exit::Io, format!("cannot read {}: {e}", path.display())))?;
    Ok(buf)
}

pub enum EvalMode {
    Single,
    Ablation(Vec<usize>),
    Compare,
}

pub struct EvalArgs<'a> {
    pub input: &'a Path,
    pub manifest: &'a Path,
    pub classifier: &'a str,
    pub extractor: &'a str,
    pub mode: EvalMode,
    pub report: Option<&'a Path>,
    pub csv: Option<&'a Path>,
}

/// Runs a protocol and returns what goes to stdout.
pub fn eval(args: EvalArgs<'_>, config: &BenchConfig) -> CliResult<String> {
    let manifest = load_manifest(args.manifest)?;
    let is_vtd = match magic(args.input)? {
        m if m == VTD_MAGIC => true,
        m if m == VTE_MAGIC => false,
        m => {
            return Err(CliError::new(
                Exit::Format,
                format!("{}: neither a VTE nor a VTD file (magic {m:?})", args.input.display()),
            ))
        }
    };
    if is_vtd && !matches!(args.mode, EvalMode::Single) {
        return Err(CliError::usage("--ablate-m and --compare need token embeddings (a VTE file)"));
    }
    let single = matches!(args.mode, EvalMode::Single);
    let (reports, stdout) = match args.mode {
        EvalMode::Single => {
            let report = if is_vtd {
                let table = DescriptorTable::from_records(read_vtd(args.input)?);
                run_protocol_on_table(&table, &manifest, args.extractor, args.classifier, config)?
            } else {
                run_protocol(args.input, &manifest, args.extractor, args.classifier, config)?
            };
            let text = report.to_json();
            (vec![report], text)
        }
        EvalMode::Ablation(m_values) => {
            let reports = soup_ablation(args.input, &manifest, &m_values, config)?;
            let text = json(&reports);
            (reports, text)
        }
        EvalMode::Compare => {
            let cmp = compare_extractors(args.input, &manifest, args.classifier, config)?;
            let reports: Vec<RunReport> = cmp.entries.iter().filter_map(|e| e.report.clone()).collect();
            (reports, cmp.to_table())
        }
    };
    if let Some(path) = args.report {
        let text = if single { reports[0].to_json() } else { json(&reports) };
        write_text(path, &text)?;
    }
    if let Some(path) = args.csv {
        write_text(path, &reports_to_csv(&reports))?;
    }
    Ok(stdout)
}

pub fn synth(spec: &SyntheticTextureSpec, out_dir: &Path) -> CliResult<(PathBuf, PathBuf)> {
    let (records, manifest) = generate_synthetic(spec)?;
    std::fs::create_dir_all(out_dir)?;
    let vte = out_dir.join(format!("{}.vte", spec.dataset_name));
    let json = out_dir.join(format!("{}.manifest.json", spec.dataset_name));
    write_vte(&records, &vte)?;
    save_manifest(&manifest, &json)?;
    Ok((vte, json))
}

fn labeled(records: &[DescriptorRecord]) -> CliResult<LabeledSet> {
    let train: Vec<&DescriptorRecord> = records.iter().filter(|r| r.label >= 0).collect();
    let dim = train.first().map_or(0, |r| r.features.len());
    let features = train.iter().flat_map(|r| r.features.iter().copied()).collect();
    let labels = train.iter().map(|r| r.label as usize).collect();
    Ok(LabeledSet::new(dim, features, labels)?)
}

/// Fits on every labeled descriptor of a VTD file and saves the model.
pub fn fit(input: &Path, output: &Path, classifier: &str, config: &BenchConfig) -> CliResult<usize> {
    let clf = classifier_registry().build(classifier, &config.classifier)?;
    let mut train = labeled(&read_vtd(input)?)?;
    let standardizer = config.standardize.then(|| Standardizer::fit(&train));
    if let Some(s) = &standardizer {
        train = train.map_features(|x| s.apply(x));
    }
    let model = clf.fit(&train)?;
    save_model(output, standardizer.as_ref(), &model.snapshot())?;
    Ok(train.len())
}

/// Predicts every record of a VTD file; returns `id,label,predicted` CSV and
/// the accuracy over labeled records, if any.
pub fn predict(input: &Path, model_path: &Path) -> CliResult<(String, Option<f64>)> {
    let (standardizer, saved) = load_model(model_path)?;
    let model = saved.into_model();
    let records = read_vtd(input)?;
    let mut out = String::from("image_id,label,predicted\n");
    let (mut labeled, mut correct) = (0usize, 0usize);
    for r in &records {
        if r.features.len() != model.dim() {
            return Err(CliError::new(
                Exit::Classifier,
                format!(
                    "{:?} has {} features, the model expects {}",
                    r.image_id,
                    r.features.len(),
                    model.dim()
                ),
            ));
        }
        let x = match &standardizer {
            Some(s) => s.apply(&r.features),
            None => r.features.clone(),
        };
        let p = model.predict(&x);
        if r.label >= 0 {
            labeled += 1;
            correct += usize::from(p == r.label as usize);
        }
        out.push_str(&format!("{},{},{}\n", csv_field(&r.image_id), r.label, p));
    }
    Ok((out, (labeled > 0).then(|| correct as f64 / labeled as f64)))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
