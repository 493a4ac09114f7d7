#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(line) = std::str::from_utf8(data) {
        if let Ok(parsed) = gridlearn::data::parse_libsvm_line(line) {
            // Accepted lines must survive a format/reparse round trip.
            let example = parsed.to_example();
            let text = gridlearn::data::format_libsvm(&example);
            let again = gridlearn::data::parse_libsvm_line(&text)
                .expect("formatted lines always parse");
            assert_eq!(again.to_example(), example);
        }
    }
});
