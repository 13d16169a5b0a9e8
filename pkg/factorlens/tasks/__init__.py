"""Luigi tasks to run factorlens workflows."""
