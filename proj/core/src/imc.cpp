// Implementation landing in module build-out.
namespace cohere::detail { int imc_translation_unit = 0; }
