#![no_main]
use covmap::io::config::ConfigDocument;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(doc) = ConfigDocument::from_json(text) {
        let _ = doc.validate();
        let json = doc.to_json();
        let again = ConfigDocument::from_json(&json).expect("emitted config parses");
        assert_eq!(again.to_json(), json);
    }
});
