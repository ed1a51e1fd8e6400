fn main() {
    for name in tpg::builtin_names() {
        let scenario = tpg::builtin(name).unwrap();
        std::fs::write(format!("scenarios/{name}.json"), scenario.to_json()).unwrap();
        println!("wrote scenarios/{name}.json");
    }
}
