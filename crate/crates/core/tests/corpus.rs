use rcad::ingest::{parse_csv, parse_pcap_file, CsvSchema};
use rcad::synthgen::{build_corpus, write_corpus_files, ScenarioConfig};
use rcad::telemetry::read_telemetry_csv;
use rcad::traffic::Label;

#[test]
fn default_corpus_is_separated_and_round_trips() {
    let c = build_corpus(&ScenarioConfig::default()).unwrap();
    for s in &c.separation {
        assert!(s.overlap < 0.05, "{s:?}");
    }
    let attacked = c.labels.iter().filter(|l| **l == Label::Attacked).count();
    assert!(attacked > 0 && attacked < c.labels.len());

    let dir = tempfile::tempdir().unwrap();
    let files = write_corpus_files(dir.path(), &c, "# test").unwrap();
    let parsed = parse_pcap_file(&files.pcap).unwrap();
    assert_eq!(parsed.rows, c.packets);
    assert_eq!(parsed.total_dropped(), 0);
    let csv = parse_csv(std::fs::File::open(&files.packets_csv).unwrap(), &CsvSchema::default()).unwrap();
    assert_eq!(csv.rows, c.packets);
    let tele = read_telemetry_csv(std::fs::File::open(&files.telemetry_csv).unwrap()).unwrap();
    assert_eq!(tele, c.telemetry);
}
