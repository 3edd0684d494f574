#![no_main]

use heavyball::analysis::DiagnosticsReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(report) = DiagnosticsReport::from_json(text) {
        let _ = report.failures();
        let back = DiagnosticsReport::from_json(&report.to_json()).expect("own output parses");
        assert_eq!(back.to_json(), report.to_json());
    }
});
