use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap());
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let config = match cbindgen::Config::from_file(dir.join("cbindgen.toml")) {
        Ok(c) => c,
        Err(e) => {
            println!("cargo:warning=cbindgen.toml: {e}");
            return;
        }
    };
    match cbindgen::Builder::new().with_crate(&dir).with_config(config).generate() {
        // write_to_file leaves the file alone when the contents are unchanged
        Ok(bindings) => {
            bindings.write_to_file(dir.join("include/fedmoe.h"));
        }
        Err(e) => println!("cargo:warning=header not regenerated: {e}"),
    }
}
