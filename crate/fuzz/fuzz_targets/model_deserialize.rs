#![no_main]

use gridlearn::store::StoredModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = StoredModel::deserialize(data) {
        // The format is canonical: anything accepted re-encodes to the
        // exact bytes it was decoded from.
        let bytes = model.serialize().expect("accepted models serialize");
        assert_eq!(bytes, data);
    }
});
