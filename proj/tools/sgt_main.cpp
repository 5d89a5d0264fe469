// Thin entry point; all command logic lives in the library so tests can call
// it directly.

int sgt_run_cli(int argc, char** argv);

int main(int argc, char** argv) { return sgt_run_cli(argc, argv); }
