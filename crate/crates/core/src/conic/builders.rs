// placeholder for the relative-entropy program builders
