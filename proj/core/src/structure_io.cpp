// Implementation landing in module build-out.
namespace cohere::detail { int structure_io_translation_unit = 0; }
