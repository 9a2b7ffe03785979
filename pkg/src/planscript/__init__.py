"""Planning-script parsing, repair and execution for visual question answering."""
